#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "iplab/core.hpp"
#include "iplab/model.hpp"

namespace iplab {

/// Linearization of the pendulum about the upright equilibrium:
/// xdot = A x + B tau with x = [theta; thetadot].
struct LinearPlant {
    MatX a_matrix;                                                  // 2n x 2n
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 3> b_matrix;  // 2n x n
    int dof = 0;
};

/// Control-effort weights: R = alpha * diag(beta). Q defaults to identity.
struct LqrSpec {
    double alpha = 1.0;
    VecJ beta;
    std::optional<Eigen::MatrixXd> q_matrix;

    void validate(int n) const {
        require(alpha > 0.0, "invalid-lqr-spec", "alpha must be > 0");
        require(beta.size() == n, "invalid-lqr-spec",
                "beta dimension must match gait dof");
        require((beta.array() > 0.0).all(), "invalid-lqr-spec",
                "all beta entries must be > 0");
        if (q_matrix) {
            require(q_matrix->rows() == 2 * n && q_matrix->cols() == 2 * n,
                    "invalid-lqr-spec", "q_matrix must be 2n x 2n");
            require((*q_matrix - q_matrix->transpose()).cwiseAbs().maxCoeff() < 1e-12,
                    "invalid-lqr-spec", "q_matrix must be symmetric");
        }
    }
};

struct LqrGain {
    GainMat gain;              // n x 2n
    Eigen::MatrixXd riccati;   // stabilizing CARE solution P
    double residual = 0.0;     // Frobenius norm of the CARE residual at P
};

/// Assistive knee torque laws: a pure stiffness for stance, PD plus gravity
/// compensation for kneeling.
struct ExoSpec {
    enum class Mode { StanceStiffness, KneelPdGravity };
    Mode mode = Mode::StanceStiffness;
    double k_r = 0.0;    // N m / rad (stance stiffness)
    double k_p = 0.0;    // N m / rad
    double k_d = 0.0;    // N m s / rad
    double gamma = 0.5;  // assistance weight, in (0, 1)

    void validate() const {
        require(k_r >= 0.0 && k_p >= 0.0 && k_d >= 0.0, "invalid-exo-spec",
                "exoskeleton gains must be >= 0");
        if (mode == Mode::KneelPdGravity)
            require(gamma > 0.0 && gamma < 1.0, "invalid-exo-spec",
                    "gamma must lie in (0, 1)");
    }
};

inline LinearPlant linearize(const PendulumModel& model) {
    int n = model.dof();
    MatJ m0 = dynamics_terms(model, JointState::zero(n)).mass_matrix;
    MatJ dg = gravity_gradient_upright(model);
    MatJ minv = m0.inverse();

    LinearPlant plant;
    plant.dof = n;
    plant.a_matrix = MatX::Zero(2 * n, 2 * n);
    plant.a_matrix.topRightCorner(n, n).setIdentity();
    plant.a_matrix.bottomLeftCorner(n, n) = -minv * dg;
    plant.b_matrix.resize(2 * n, n);
    plant.b_matrix.topRows(n).setZero();
    plant.b_matrix.bottomRows(n) = minv;
    return plant;
}

inline MatJ build_r(const LqrSpec& spec) {
    require(spec.alpha > 0.0, "invalid-lqr-spec", "alpha must be > 0");
    require(spec.beta.size() > 0 && (spec.beta.array() > 0.0).all(),
            "invalid-lqr-spec", "all beta entries must be > 0");
    return (spec.alpha * spec.beta).asDiagonal();
}

namespace detail {

/// Solves F^T X + X F = -W for symmetric X, F Hurwitz, via complex Schur.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& f, const Eigen::MatrixXd& w) {
    using CMat = Eigen::MatrixXcd;
    int m = static_cast<int>(f.rows());
    Eigen::ComplexSchur<Eigen::MatrixXd> schur(f);
    require(schur.info() == Eigen::Success, "riccati-failure", "Schur decomposition failed");
    CMat t = schur.matrixT();
    CMat u = schur.matrixU();
    CMat wt = u.adjoint() * w * u;
    CMat y = CMat::Zero(m, m);
    for (int k = 0; k < m; ++k) {
        Eigen::VectorXcd rhs = -wt.col(k);
        for (int j = 0; j < k; ++j) rhs -= t(j, k) * y.col(j);
        CMat lhs = t.adjoint();
        lhs.diagonal().array() += t(k, k);
        y.col(k) = lhs.triangularView<Eigen::Lower>().solve(rhs);
    }
    Eigen::MatrixXd x = (u * y * u.adjoint()).real();
    return 0.5 * (x + x.transpose());
}

inline Eigen::MatrixXd care_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& g,
                                     const Eigen::MatrixXd& q, const Eigen::MatrixXd& x) {
    return a.transpose() * x + x * a - x * g * x + q;
}

/// Stabilizing solution of A^T X + X A - X G X + Q = 0. The Hamiltonian
/// matrix-sign iteration (with determinant scaling) supplies a stabilizing
/// seed; Newton-Kleinman steps polish the residual.
inline Eigen::MatrixXd solve_care(const Eigen::MatrixXd& a, const Eigen::MatrixXd& g,
                                  const Eigen::MatrixXd& q) {
    int m = static_cast<int>(a.rows());
    Eigen::MatrixXd h(2 * m, 2 * m);
    h << a, -g, -q, -a.transpose();

    Eigen::MatrixXd z = h;
    double prev_delta = std::numeric_limits<double>::max();
    for (int it = 0; it < 120; ++it) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(z);
        require(lu.isInvertible(), "riccati-failure",
                "sign iteration hit a singular iterate (plant not stabilizable?)");
        Eigen::MatrixXd zinv = lu.inverse();
        double c = std::pow(std::abs(lu.determinant()), 1.0 / (2.0 * m));
        if (!(c > 0.0) || !std::isfinite(c)) c = 1.0;
        Eigen::MatrixXd znext = 0.5 * (z / c + c * zinv);
        double delta = (znext - z).norm();
        z = znext;
        if (delta <= 1e-14 * z.norm()) break;
        // Quadratic convergence stalls at roundoff; stop once it does.
        if (delta >= prev_delta && delta <= 1e-8 * z.norm()) break;
        prev_delta = delta;
    }

    // Stable invariant subspace: (sign(H) + I) [I; X] = 0.
    Eigen::MatrixXd lhs(2 * m, m), rhs(2 * m, m);
    lhs.topRows(m) = z.topRightCorner(m, m);
    lhs.bottomRows(m) = z.bottomRightCorner(m, m) + Eigen::MatrixXd::Identity(m, m);
    rhs.topRows(m) = -(z.topLeftCorner(m, m) + Eigen::MatrixXd::Identity(m, m));
    rhs.bottomRows(m) = -z.bottomLeftCorner(m, m);
    Eigen::MatrixXd x = lhs.colPivHouseholderQr().solve(rhs);
    x = 0.5 * (x + x.transpose());

    // Newton-Kleinman refinement with residual-based convergence.
    double best_res = care_residual(a, g, q, x).norm();
    Eigen::MatrixXd best_x = x;
    for (int it = 0; it < 30; ++it) {
        Eigen::MatrixXd f = a - g * x;
        Eigen::MatrixXd w = q + x * g * x;
        Eigen::MatrixXd xn = solve_lyapunov(f, w);
        double res = care_residual(a, g, q, xn).norm();
        if (res < best_res) {
            best_res = res;
            best_x = xn;
        }
        if (res <= 1e-10 * std::max(1.0, xn.norm())) return xn;
        if ((xn - x).norm() <= 1e-15 * xn.norm()) break;
        x = xn;
    }
    return best_x;
}

} // namespace detail

/// LQR state-feedback gain K = R^-1 B^T P from the stabilizing CARE solution.
inline LqrGain lqr_gain(const LinearPlant& plant, const LqrSpec& spec) {
    int n = plant.dof;
    spec.validate(n);
    Eigen::MatrixXd a = plant.a_matrix;
    Eigen::MatrixXd b = plant.b_matrix;
    Eigen::MatrixXd r = build_r(spec);
    Eigen::MatrixXd q =
        spec.q_matrix ? *spec.q_matrix : Eigen::MatrixXd::Identity(2 * n, 2 * n);

    Eigen::MatrixXd rinv_bt = r.ldlt().solve(b.transpose());
    Eigen::MatrixXd g = b * rinv_bt;

    // Balance the equation before solving: P = s * Phat turns (G, Q) into
    // (s G, Q / s). Choosing s to equalize the two keeps the Hamiltonian
    // blocks comparable even when R spans ten orders of magnitude.
    double s = std::sqrt(q.norm() / std::max(g.norm(), 1e-300));
    if (!std::isfinite(s) || s <= 0.0) s = 1.0;
    Eigen::MatrixXd p = s * detail::solve_care(a, s * g, q / s);

    double res = detail::care_residual(a, g, q, p).norm();
    require(res <= 1e-8 * std::max(1.0, p.norm()), "riccati-failure",
            "CARE residual too large: " + std::to_string(res));

    LqrGain out;
    out.gain = rinv_bt * p;
    out.riccati = p;
    out.residual = res;

    Eigen::MatrixXd acl = a - b * out.gain;
    Eigen::VectorXcd eigs = acl.eigenvalues();
    require((eigs.real().array() < 0.0).all(), "riccati-failure",
            "closed loop is not Hurwitz");
    return out;
}

/// Output maps of the linearized plant: y1 = C x + D1 tau reproduces the
/// (negated) horizontal GRF, y2 = D2 tau selects the pin-joint torque.
struct OutputMatrices {
    Eigen::RowVectorXd c_matrix;   // 1 x 2n
    Eigen::RowVectorXd d1_matrix;  // 1 x n
    Eigen::RowVectorXd d2_matrix;  // 1 x n
};

inline OutputMatrices output_matrices(const PendulumModel& model, const LinearPlant& plant) {
    int n = model.dof();
    require(plant.dof == n, "dimension-mismatch", "plant does not match model gait");
    double mt = model.total_mass();
    auto kin0 = body_com_kinematics(model, JointState::zero(n));
    Eigen::RowVectorXd jx = kin0.jacobian.row(0);  // d x_m / d theta at upright

    MatJ m0 = dynamics_terms(model, JointState::zero(n)).mass_matrix;
    Eigen::MatrixXd minv = Eigen::MatrixXd(m0).inverse();

    OutputMatrices out;
    // y1 = -m_t xdd_m = -m_t jx * thetadd to first order (the jacobian-rate
    // term is quadratic in the state and drops out of the linearization).
    out.c_matrix = Eigen::RowVectorXd::Zero(2 * n);
    out.c_matrix.head(n) = -mt * jx * plant.a_matrix.bottomLeftCorner(n, n);
    out.d1_matrix = -mt * jx * minv;
    out.d2_matrix = Eigen::RowVectorXd::Zero(n);
    out.d2_matrix(0) = 1.0;
    return out;
}

/// Exoskeleton torque for the given joint state. Stance: -k_r * knee angle.
/// Kneeling: PD on the knee plus weighted static gravity compensation.
inline double exo_torque(const ExoSpec& spec, const JointState& state,
                         const PendulumModel& model) {
    check_state_dim(model, state);
    spec.validate();
    if (spec.mode == ExoSpec::Mode::StanceStiffness) {
        require(model.gait() == Gait::Stance, "invalid-exo-spec",
                "stance stiffness law requires the stance model");
        return -spec.k_r * state.angles[1];  // knee is the second joint
    }
    require(model.gait() == Gait::Kneeling, "invalid-exo-spec",
            "kneeling PD law requires the kneeling model");
    const auto& thigh = model.segments()[0];
    const auto& hat = model.segments()[1];
    double knee = state.angles[0], hip = state.angles[1];
    double grav = spec.gamma * model.gravity() *
                  (0.5 * hat.mass * (thigh.length * std::sin(knee) -
                                     hat.com_offset * std::sin(hip)) +
                   thigh.mass * thigh.com_offset * std::sin(knee));
    return -spec.k_p * knee - spec.k_d * state.rates[0] - grav;
}

/// Joint row the exoskeleton acts on: the knee (second joint in stance, the
/// ground pin in kneeling).
inline int exo_torque_row(const PendulumModel& model) {
    return model.gait() == Gait::Stance ? 1 : 0;
}

/// Balance-controller parameters (effort scale, per-joint effort weights,
/// per-joint torque-noise scale).
struct ControllerParams {
    double alpha = 1.0;
    VecJ beta;
    VecJ sigma;

    LqrSpec lqr_spec() const { return LqrSpec{alpha, beta, std::nullopt}; }

    /// Restrict stance parameters (ankle, knee, hip) to a kneeling model by
    /// dropping the ankle entries.
    ControllerParams for_gait(Gait gait) const {
        if (gait == Gait::Stance || beta.size() == 2) return *this;
        ControllerParams out;
        out.alpha = alpha;
        out.beta = beta.tail(2);
        out.sigma = sigma.tail(2);
        return out;
    }
};

/// Best-fit controller presets toi1..toi8 (stance parameter triples).
inline ControllerParams controller_preset(const std::string& name) {
    auto mk = [](double a, double b1, double b2, double b3, double s1, double s2,
                 double s3) {
        ControllerParams p;
        p.alpha = a;
        p.beta.resize(3);
        p.beta << b1, b2, b3;
        p.sigma.resize(3);
        p.sigma << s1, s2, s3;
        return p;
    };
    if (name == "toi1") return mk(1e6, 0.2, 0.1, 0.3, 1, 1, 1);
    if (name == "toi2") return mk(1e10, 0.3, 0.1, 33.3, 1, 1, 1);
    if (name == "toi3") return mk(1e6, 0.2, 0.1, 0.3, 0.7, 0.3, 1);
    if (name == "toi4") return mk(1e6, 0.2, 0.1, 0.3, 0.7, 0.3, 1);
    if (name == "toi5") return mk(1e10, 0.2, 0.1, 0.3, 1, 1, 1);
    if (name == "toi6") return mk(1e10, 0.2, 0.1, 0.3, 1, 0.7, 0.3);
    if (name == "toi7") return mk(10.0, 0.3, 0.1, 33.3, 1, 1, 1);
    if (name == "toi8") return mk(1e10, 0.2, 0.1, 0.3, 1, 1, 1);
    throw Error("unknown-preset", "unknown controller preset: " + name);
}

} // namespace iplab
