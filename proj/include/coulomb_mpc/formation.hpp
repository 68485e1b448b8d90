#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coulomb_mpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when two spacecraft are closer than the configured separation guard.
class SingularityError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw std::invalid_argument(message);
}

}  // namespace detail

/// Number of unordered spacecraft pairs, C(n, 2).
constexpr int pair_count(int num_spacecraft) { return num_spacecraft * (num_spacecraft - 1) / 2; }

/**
 * @brief Physical description of a collinear Coulomb formation.
 *
 * Charges are expressed in units of 10 mC and the Coulomb constant is scaled
 * accordingly (8.99e5 N m^2 / (10 mC)^2).
 */
struct FormationConfig {
    int num_spacecraft = 4;
    VectorXd masses;                    ///< [kg], one per spacecraft
    double coulomb_constant = 8.99e5;   ///< [N m^2 / (10 mC)^2]
    VectorXd state_min;                 ///< 2(Ns-1) lower bounds on [xi; nu]
    VectorXd state_max;                 ///< 2(Ns-1) upper bounds on [xi; nu]
    VectorXd charge_min;                ///< [10 mC], Ns entries
    VectorXd charge_max;                ///< [10 mC], Ns entries
    VectorXd product_min;               ///< optional, empty or m entries
    VectorXd product_max;               ///< optional, empty or m entries
    double min_separation = 1e-3;       ///< singularity guard [m]

    int num_pairs() const { return pair_count(num_spacecraft); }
    int state_dim() const { return 2 * (num_spacecraft - 1); }
    bool has_product_bounds() const { return product_min.size() > 0 || product_max.size() > 0; }

    void validate() const {
        using detail::require;
        require(num_spacecraft >= 2, "FormationConfig: need at least two spacecraft");
        require(masses.size() == num_spacecraft, "FormationConfig: masses has wrong length");
        require((masses.array() > 0.0).all() && masses.allFinite(), "FormationConfig: masses must be positive");
        require(coulomb_constant > 0.0 && std::isfinite(coulomb_constant),
                "FormationConfig: Coulomb constant must be positive");
        require(state_min.size() == state_dim() && state_max.size() == state_dim(),
                "FormationConfig: state bounds have wrong length");
        require((state_min.array() < state_max.array()).all(), "FormationConfig: state_min must be below state_max");
        require(charge_min.size() == num_spacecraft && charge_max.size() == num_spacecraft,
                "FormationConfig: charge bounds have wrong length");
        require((charge_min.array() < charge_max.array()).all(),
                "FormationConfig: charge_min must be below charge_max");
        if (has_product_bounds()) {
            require(product_min.size() == num_pairs() && product_max.size() == num_pairs(),
                    "FormationConfig: product bounds have wrong length");
            require((product_min.array() <= product_max.array()).all(),
                    "FormationConfig: product_min must not exceed product_max");
        }
        require(min_separation > 0.0, "FormationConfig: min_separation must be positive");
    }

    /// Equal masses, unbounded-ish states, charge box [-limit, limit].
    static FormationConfig uniform(int num_spacecraft, double mass, double charge_limit = 1.0) {
        FormationConfig cfg;
        cfg.num_spacecraft = num_spacecraft;
        cfg.masses = VectorXd::Constant(num_spacecraft, mass);
        const int n = 2 * (num_spacecraft - 1);
        cfg.state_min = VectorXd::Constant(n, -1e6);
        cfg.state_max = VectorXd::Constant(n, 1e6);
        cfg.charge_min = VectorXd::Constant(num_spacecraft, -charge_limit);
        cfg.charge_max = VectorXd::Constant(num_spacecraft, charge_limit);
        return cfg;
    }
};

struct AbsoluteState {
    VectorXd positions;   ///< [m]
    VectorXd velocities;  ///< [m/s]
};

/// Relative coordinates xi_i = x_{i+1} - x_1 and their rates.
struct RelativeState {
    VectorXd xi;  ///< [m]
    VectorXd nu;  ///< [m/s]

    RelativeState() = default;
    RelativeState(VectorXd xi_in, VectorXd nu_in) : xi(std::move(xi_in)), nu(std::move(nu_in)) {
        detail::require(xi.size() == nu.size(), "RelativeState: xi and nu lengths differ");
    }

    static RelativeState from_packed(const Eigen::Ref<const VectorXd>& packed) {
        detail::require(packed.size() % 2 == 0, "RelativeState: packed state must have even length");
        const Eigen::Index n = packed.size() / 2;
        return RelativeState(packed.head(n), packed.tail(n));
    }

    static RelativeState from_absolute(const AbsoluteState& abs) {
        detail::require(abs.positions.size() == abs.velocities.size() && abs.positions.size() >= 2,
                        "RelativeState: bad absolute state");
        const Eigen::Index n = abs.positions.size() - 1;
        VectorXd xi = abs.positions.tail(n).array() - abs.positions(0);
        VectorXd nu = abs.velocities.tail(n).array() - abs.velocities(0);
        return RelativeState(std::move(xi), std::move(nu));
    }

    /// Packed form [xi; nu].
    VectorXd packed() const {
        VectorXd out(xi.size() + nu.size());
        out << xi, nu;
        return out;
    }

    Eigen::Index size() const { return xi.size(); }
};

/**
 * @brief Flat index <-> spacecraft pair map.
 *
 * Pairs are ordered (0,1),(0,2),...,(0,n-1),(1,2),...,(n-2,n-1), which is the
 * order of the strictly lower triangle of q q^T read column by column.
 * Indices are zero-based.
 */
class PairIndex {
 public:
    explicit PairIndex(int num_spacecraft) : num_spacecraft_(num_spacecraft) {
        detail::require(num_spacecraft >= 2, "PairIndex: need at least two spacecraft");
        pairs_.reserve(static_cast<std::size_t>(pair_count(num_spacecraft)));
        for (int i = 0; i < num_spacecraft; ++i)
            for (int j = i + 1; j < num_spacecraft; ++j) pairs_.emplace_back(i, j);
    }

    int num_spacecraft() const { return num_spacecraft_; }
    int size() const { return static_cast<int>(pairs_.size()); }
    const std::pair<int, int>& operator[](int l) const { return pairs_.at(static_cast<std::size_t>(l)); }
    auto begin() const { return pairs_.begin(); }
    auto end() const { return pairs_.end(); }

    /// Flat index of pair (i, j), i != j.
    int index_of(int i, int j) const {
        if (i > j) std::swap(i, j);
        detail::require(i >= 0 && j < num_spacecraft_ && i != j, "PairIndex: pair out of range");
        // Pairs with first index < i come first.
        return i * num_spacecraft_ - i * (i + 1) / 2 + (j - i - 1);
    }

 private:
    int num_spacecraft_;
    std::vector<std::pair<int, int>> pairs_;
};

/// L(q): all pairwise charge products in PairIndex order.
inline VectorXd charge_products(const Eigen::Ref<const VectorXd>& q) {
    detail::require(q.size() >= 2, "charge_products: need at least two charges");
    const PairIndex pairs(static_cast<int>(q.size()));
    VectorXd u(pairs.size());
    for (int l = 0; l < pairs.size(); ++l) u(l) = q(pairs[l].first) * q(pairs[l].second);
    return u;
}

inline void check_separation(const Eigen::Ref<const VectorXd>& x, double min_separation) {
    if (!x.allFinite()) throw SingularityError("non-finite spacecraft position");
    for (Eigen::Index i = 0; i < x.size(); ++i)
        for (Eigen::Index j = i + 1; j < x.size(); ++j)
            if (std::abs(x(i) - x(j)) < min_separation)
                throw SingularityError("spacecraft " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                                       " are closer than " + std::to_string(min_separation) + " m");
}

/**
 * @brief Absolute-coordinate input matrix, x'' = G(x) L(q).
 *
 * Column l (pair (i, j)) holds (k/m_i)(x_i - x_j)/|x_i - x_j|^3 in row i and the
 * mirrored term in row j.
 */
inline MatrixXd absolute_input_matrix(const Eigen::Ref<const VectorXd>& x, const FormationConfig& cfg) {
    detail::require(x.size() == cfg.num_spacecraft, "absolute_input_matrix: position vector has wrong length");
    check_separation(x, cfg.min_separation);
    const PairIndex pairs(cfg.num_spacecraft);
    MatrixXd g = MatrixXd::Zero(cfg.num_spacecraft, pairs.size());
    for (int l = 0; l < pairs.size(); ++l) {
        const auto [i, j] = pairs[l];
        const double d = x(i) - x(j);
        const double inv_cube = 1.0 / (std::abs(d) * d * d);
        g(i, l) = cfg.coulomb_constant / cfg.masses(i) * d * inv_cube;
        g(j, l) = -cfg.coulomb_constant / cfg.masses(j) * d * inv_cube;
    }
    return g;
}

/// Positions with spacecraft 1 at the origin: [0; xi].
inline VectorXd positions_from_relative(const Eigen::Ref<const VectorXd>& xi) {
    VectorXd x(xi.size() + 1);
    x << 0.0, xi;
    return x;
}

/// Relative input matrix, xi'' = G(xi) L(q): rows 2..Ns of the absolute matrix minus row 1.
inline MatrixXd relative_input_matrix(const Eigen::Ref<const VectorXd>& xi, const FormationConfig& cfg) {
    detail::require(xi.size() == cfg.num_spacecraft - 1, "relative_input_matrix: xi has wrong length");
    const MatrixXd g_abs = absolute_input_matrix(positions_from_relative(xi), cfg);
    const Eigen::Index n = xi.size();
    return g_abs.bottomRows(n).rowwise() - g_abs.row(0);
}

/// d/dt [xi; nu] = [nu; G(xi) L(q)].
inline RelativeState continuous_rhs(const RelativeState& state, const Eigen::Ref<const VectorXd>& q,
                                    const FormationConfig& cfg) {
    detail::require(q.size() == cfg.num_spacecraft, "continuous_rhs: charge vector has wrong length");
    return RelativeState(state.nu, relative_input_matrix(state.xi, cfg) * charge_products(q));
}

/// One classical RK4 step with q held constant over [t, t + h].
inline RelativeState rk4_step(const RelativeState& state, const Eigen::Ref<const VectorXd>& q, double h,
                              const FormationConfig& cfg) {
    detail::require(h > 0.0, "rk4_step: step must be positive");
    const VectorXd u = charge_products(q);
    const auto f = [&](const VectorXd& xi, const VectorXd& nu, VectorXd& dxi, VectorXd& dnu) {
        dxi = nu;
        dnu = relative_input_matrix(xi, cfg) * u;
    };
    VectorXd k1x, k1v, k2x, k2v, k3x, k3v, k4x, k4v;
    f(state.xi, state.nu, k1x, k1v);
    f(state.xi + 0.5 * h * k1x, state.nu + 0.5 * h * k1v, k2x, k2v);
    f(state.xi + 0.5 * h * k2x, state.nu + 0.5 * h * k2v, k3x, k3v);
    f(state.xi + h * k3x, state.nu + h * k3v, k4x, k4v);
    return RelativeState(state.xi + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
                         state.nu + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v));
}

/// `substeps` RK4 steps of size h / substeps; the truth propagator.
inline RelativeState propagate(const RelativeState& state, const Eigen::Ref<const VectorXd>& q, double h,
                               int substeps, const FormationConfig& cfg) {
    detail::require(substeps >= 1, "propagate: substeps must be positive");
    RelativeState s = state;
    const double dt = h / substeps;
    for (int i = 0; i < substeps; ++i) s = rk4_step(s, q, dt, cfg);
    return s;
}

/**
 * @brief Frozen-coefficient prediction model Xi[k+1] = A Xi[k] + B u[k].
 *
 * A = [I hI; 0 I], B = [(h^2/2) G; h G] with G = relative_input_matrix(xi_des),
 * the exact zero-order-hold map of xi'' = G u.
 */
struct DiscreteModel {
    double sample_period = 0.0;
    MatrixXd A;
    MatrixXd B;
    VectorXd linearization_point;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int input_dim() const { return static_cast<int>(B.cols()); }

    VectorXd predict(const Eigen::Ref<const VectorXd>& packed_state, const Eigen::Ref<const VectorXd>& u) const {
        return A * packed_state + B * u;
    }
};

inline DiscreteModel build_discrete_model(const Eigen::Ref<const VectorXd>& xi_des, double h,
                                          const FormationConfig& cfg) {
    detail::require(h > 0.0, "build_discrete_model: sample period must be positive");
    const MatrixXd g = relative_input_matrix(xi_des, cfg);
    const Eigen::Index n = xi_des.size();
    DiscreteModel model;
    model.sample_period = h;
    model.linearization_point = xi_des;
    model.A = MatrixXd::Identity(2 * n, 2 * n);
    model.A.topRightCorner(n, n).diagonal().setConstant(h);
    model.B.resize(2 * n, g.cols());
    model.B << (0.5 * h * h) * g, h * g;
    return model;
}

}  // namespace coulomb_mpc
