#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "iplab/core.hpp"

namespace iplab {

enum class Gait { Stance, Kneeling };

inline int gait_dof(Gait g) { return g == Gait::Stance ? 3 : 2; }

/// Per-link inertial parameters. com_offset is measured from the lower
/// (proximal-to-ground) joint of the link; inertia is about the link COM.
struct SegmentParams {
    double mass;        // kg
    double length;      // m, joint-to-joint
    double com_offset;  // m, lower joint -> link COM
    double inertia;     // kg m^2

    void validate() const {
        require(mass > 0.0, "invalid-model", "segment mass must be > 0");
        require(length > 0.0, "invalid-model", "segment length must be > 0");
        require(com_offset > 0.0 && com_offset <= length, "invalid-model",
                "segment com_offset must lie in (0, length]");
        require(inertia > 0.0, "invalid-model", "segment inertia must be > 0");
    }
};

/// Planar serial inverted pendulum: 3 links for stance (shank, thigh, HAT,
/// pinned at the ankle), 2 links for kneeling (thigh, HAT, pinned at the
/// knee). Joint angles are relative, zero at the upright equilibrium.
class PendulumModel {
public:
    PendulumModel(Gait gait, std::vector<SegmentParams> segments, double gravity = 9.8)
        : gait_(gait), segments_(std::move(segments)), gravity_(gravity) {
        require(static_cast<int>(segments_.size()) == gait_dof(gait_), "invalid-model",
                "segment count must match gait (3 stance, 2 kneeling)");
        require(gravity_ > 0.0, "invalid-model", "gravity must be > 0");
        for (const auto& s : segments_) s.validate();
    }

    Gait gait() const { return gait_; }
    int dof() const { return static_cast<int>(segments_.size()); }
    const std::vector<SegmentParams>& segments() const { return segments_; }
    double gravity() const { return gravity_; }

    double total_mass() const {
        double m = 0.0;
        for (const auto& s : segments_) m += s.mass;
        return m;
    }

    /// Height of the body COM at upright, per the lumped COM expression.
    double upright_com_height() const {
        double z = 0.0;
        for (const auto& s : segments_) z += s.com_offset;
        return z;
    }

    // Table-driven presets for the stance and kneeling bodies.
    static PendulumModel tip_default() {
        return PendulumModel(Gait::Stance,
                             {{6.0, 0.6, 0.3, 0.264},
                              {14.0, 0.42, 0.1, 0.1722},
                              {48.0, 0.7, 0.45, 0.441}});
    }
    static PendulumModel dip_default() {
        return PendulumModel(Gait::Kneeling,
                             {{20.0, 0.568, 0.284, 0.5},
                              {42.0, 0.622, 0.311, 3.5}});
    }
    static PendulumModel preset(const std::string& name) {
        if (name == "tip-default") return tip_default();
        if (name == "dip-default") return dip_default();
        throw Error("unknown-preset", "unknown model preset: " + name);
    }

private:
    Gait gait_;
    std::vector<SegmentParams> segments_;
    double gravity_;
};

/// Relative joint angles and rates; dimension matches the gait.
struct JointState {
    VecJ angles;
    VecJ rates;

    static JointState zero(int n) {
        JointState s;
        s.angles = VecJ::Zero(n);
        s.rates = VecJ::Zero(n);
        return s;
    }
};

inline void check_state_dim(const PendulumModel& model, const JointState& state) {
    require(state.angles.size() == model.dof() && state.rates.size() == model.dof(),
            "dimension-mismatch", "joint state dimension does not match gait");
}

struct DynamicsTerms {
    MatJ mass_matrix;      // M(theta), symmetric positive definite
    MatJ coriolis_matrix;  // C(theta, thetadot), Christoffel factorization
    VecJ gravity_vector;   // G(theta), zero at upright
};

struct GroundReaction {
    double fx;  // N, horizontal (A-P)
    double fz;  // N, vertical
};

struct ComKinematics {
    Eigen::Vector2d position;                                   // (x_m, z_m)
    Eigen::Matrix<double, 2, Eigen::Dynamic, 0, 2, 3> jacobian; // d r / d theta
    Eigen::Matrix<double, 2, Eigen::Dynamic, 0, 2, 3> jacobian_rate;
};

struct StateDerivative {
    VecJ rates;
    VecJ accelerations;
};

namespace detail {

inline void fast_sincos(double x, double& s, double& c) {
    // Degree-13/14 Taylor evaluation; below |x| = 0.3 the truncation error is
    // under 1 ulp, so the fast path is numerically interchangeable with libm.
    double ax = x < 0 ? -x : x;
    if (ax < 0.3) {
        double x2 = x * x;
        s = x * (1.0 + x2 * (-1.6666666666666666e-01 + x2 * (8.3333333333333332e-03 +
              x2 * (-1.9841269841269841e-04 + x2 * (2.7557319223985893e-06 +
              x2 * -2.5052108385441720e-08)))));
        c = 1.0 + x2 * (-0.5 + x2 * (4.1666666666666664e-02 + x2 * (-1.3888888888888889e-03 +
              x2 * (2.4801587301587302e-05 + x2 * (-2.7557319223985888e-07 +
              x2 * 2.0876756987868100e-09)))));
    } else {
        s = std::sin(x);
        c = std::cos(x);
    }
}

/// Precomputed chain constants + per-state dynamics evaluation for an
/// N-link serial pendulum in relative coordinates. The same code path backs
/// the public dynamics API and the simulation inner loop.
template <int N>
struct Chain {
    static constexpr int dof = N;

    std::array<std::array<double, N>, N> P{};  // kinetic-energy pair weights
    std::array<double, N> W{};                 // gravity first moments
    std::array<double, N> Isum{};              // suffix sums of link inertias
    std::array<double, N> lc{};                // per-link reported COM offsets
    std::array<double, N> lam{};               // W / m_t: body-COM coefficients
    double g = 9.8;
    double mt = 0.0;

    explicit Chain(const PendulumModel& model) {
        const auto& seg = model.segments();
        g = model.gravity();
        std::array<double, N> m{}, l{};
        for (int i = 0; i < N; ++i) {
            m[i] = seg[i].mass;
            l[i] = seg[i].length;
            lc[i] = seg[i].com_offset;
            mt += m[i];
        }
        // w[i][j]: moment arm of link i's COM w.r.t. absolute angle j.
        auto w = [&](int i, int j) -> double {
            if (j > i) return 0.0;
            return j < i ? l[j] : lc[i];
        };
        for (int j = 0; j < N; ++j) {
            for (int k = 0; k < N; ++k) {
                double p = 0.0;
                for (int i = std::max(j, k); i < N; ++i) p += m[i] * w(i, j) * w(i, k);
                P[j][k] = p;
            }
            double wj = m[j] * lc[j];
            for (int i = j + 1; i < N; ++i) wj += m[i] * l[j];
            W[j] = wj;
        }
        for (int c = N - 1; c >= 0; --c)
            Isum[c] = seg[c].inertia + (c + 1 < N ? Isum[c + 1] : 0.0);
        for (int c = 0; c < N; ++c) lam[c] = W[c] / mt;
    }

    // Trigonometric state shared by all per-state evaluations: sines/cosines
    // of the absolute link angles and of their pairwise differences.
    struct Trig {
        std::array<double, N> sphi{}, cphi{};
        std::array<std::array<double, N>, N> sd{}, cd{};
    };

    static Trig trig(const double* theta) {
        Trig t;
        std::array<double, N> st{}, ct{};
        for (int i = 0; i < N; ++i) fast_sincos(theta[i], st[i], ct[i]);
        t.sphi[0] = st[0];
        t.cphi[0] = ct[0];
        for (int i = 1; i < N; ++i) {
            t.sphi[i] = t.sphi[i - 1] * ct[i] + t.cphi[i - 1] * st[i];
            t.cphi[i] = t.cphi[i - 1] * ct[i] - t.sphi[i - 1] * st[i];
        }
        for (int j = 0; j < N; ++j) {
            t.sd[j][j] = 0.0;
            t.cd[j][j] = 1.0;
        }
        for (int j = 1; j < N; ++j) {
            // phi_j - phi_{j-1} = theta_j
            t.sd[j][j - 1] = st[j];
            t.cd[j][j - 1] = ct[j];
            for (int k = j - 2; k >= 0; --k) {
                t.sd[j][k] = t.sd[j][k + 1] * ct[k + 1] + t.cd[j][k + 1] * st[k + 1];
                t.cd[j][k] = t.cd[j][k + 1] * ct[k + 1] - t.sd[j][k + 1] * st[k + 1];
            }
            for (int k = 0; k < j; ++k) {
                t.sd[k][j] = -t.sd[j][k];
                t.cd[k][j] = t.cd[j][k];
            }
        }
        return t;
    }

    void mass_matrix(const Trig& t, double M[N][N]) const {
        for (int a = 0; a < N; ++a) {
            for (int b = a; b < N; ++b) {
                double acc = Isum[b];  // b >= a
                for (int j = a; j < N; ++j)
                    for (int k = b; k < N; ++k) acc += P[j][k] * t.cd[j][k];
                M[a][b] = acc;
                M[b][a] = acc;
            }
        }
    }

    // dM[c][a][b] = d M_ab / d theta_c
    void mass_matrix_partials(const Trig& t, double dM[N][N][N]) const {
        for (int c = 0; c < N; ++c) {
            for (int a = 0; a < N; ++a) {
                for (int b = a; b < N; ++b) {
                    double acc = 0.0;
                    for (int j = a; j < N; ++j) {
                        for (int k = b; k < N; ++k) {
                            int ind = (c <= j ? 1 : 0) - (c <= k ? 1 : 0);
                            if (ind != 0) acc -= P[j][k] * t.sd[j][k] * ind;
                        }
                    }
                    dM[c][a][b] = acc;
                    dM[c][b][a] = acc;
                }
            }
        }
    }

    void coriolis_matrix(const Trig& t, const double* qd, double C[N][N]) const {
        double dM[N][N][N];
        mass_matrix_partials(t, dM);
        for (int a = 0; a < N; ++a) {
            for (int b = 0; b < N; ++b) {
                double acc = 0.0;
                for (int c = 0; c < N; ++c)
                    acc += 0.5 * (dM[c][a][b] + dM[b][a][c] - dM[a][b][c]) * qd[c];
                C[a][b] = acc;
            }
        }
    }

    void gravity_vector(const Trig& t, double G[N]) const {
        for (int a = N - 1; a >= 0; --a) {
            double acc = a + 1 < N ? G[a + 1] : 0.0;
            G[a] = acc - g * W[a] * t.sphi[a];
        }
    }

    // Solves M qdd = rhs via in-place Cholesky; N <= 3 so everything stays
    // in registers.
    static void solve_spd(const double Min[N][N], const double* rhs, double* out) {
        double L[N][N];
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j <= i; ++j) {
                double acc = Min[i][j];
                for (int k = 0; k < j; ++k) acc -= L[i][k] * L[j][k];
                if (i == j) {
                    require(acc > 0.0, "singular-mass-matrix",
                            "mass matrix not positive definite");
                    L[i][j] = std::sqrt(acc);
                } else {
                    L[i][j] = acc / L[j][j];
                }
            }
        }
        double y[N];
        for (int i = 0; i < N; ++i) {
            double acc = rhs[i];
            for (int k = 0; k < i; ++k) acc -= L[i][k] * y[k];
            y[i] = acc / L[i][i];
        }
        for (int i = N - 1; i >= 0; --i) {
            double acc = y[i];
            for (int k = i + 1; k < N; ++k) acc -= L[k][i] * out[k];
            out[i] = acc / L[i][i];
        }
    }

    /// qdd = M^-1 (tau - C qd - G); the composition is the exact algebraic
    /// inverse of the assembled terms.
    void accelerations(const double* q, const double* qd, const double* tau,
                       double* qdd) const {
        Trig t = trig(q);
        double M[N][N], C[N][N], G[N];
        mass_matrix(t, M);
        coriolis_matrix(t, qd, C);
        gravity_vector(t, G);
        double rhs[N];
        for (int a = 0; a < N; ++a) {
            double acc = tau[a] - G[a];
            for (int b = 0; b < N; ++b) acc -= C[a][b] * qd[b];
            rhs[a] = acc;
        }
        solve_spd(M, rhs, qdd);
    }

    /// COM-style point for coefficient vector c:
    /// x = -sum c_i sin(phi_i), z = sum c_i cos(phi_i). With c = lc this is
    /// the per-link reported COM chain; with c = lam it is the mass-weighted
    /// body COM (the one Newtonian GRFs follow).
    static void com_position(const Trig& t, const std::array<double, N>& c, double& x,
                             double& z) {
        x = 0.0;
        z = 0.0;
        for (int i = 0; i < N; ++i) {
            x -= c[i] * t.sphi[i];
            z += c[i] * t.cphi[i];
        }
    }

    static void com_jacobian(const Trig& t, const std::array<double, N>& c, double Jx[N],
                             double Jz[N]) {
        double sx = 0.0, sz = 0.0;
        for (int a = N - 1; a >= 0; --a) {
            sx -= c[a] * t.cphi[a];
            sz -= c[a] * t.sphi[a];
            Jx[a] = sx;
            Jz[a] = sz;
        }
    }

    // Time derivative of the COM jacobian given joint rates.
    static void com_jacobian_rate(const Trig& t, const std::array<double, N>& c,
                                  const double* qd, double Jxd[N], double Jzd[N]) {
        double phid[N];
        double acc = 0.0;
        for (int i = 0; i < N; ++i) {
            acc += qd[i];
            phid[i] = acc;
        }
        double sx = 0.0, sz = 0.0;
        for (int a = N - 1; a >= 0; --a) {
            sx += c[a] * t.sphi[a] * phid[a];
            sz -= c[a] * t.cphi[a] * phid[a];
            Jxd[a] = sx;
            Jzd[a] = sz;
        }
    }

    /// COM acceleration (xdd, zdd) = Jdot qd + J qdd for coefficients c.
    static void com_acceleration(const Trig& t, const std::array<double, N>& c,
                                 const double* qd, const double* qdd, double& xdd,
                                 double& zdd) {
        double Jx[N], Jz[N], Jxd[N], Jzd[N];
        com_jacobian(t, c, Jx, Jz);
        com_jacobian_rate(t, c, qd, Jxd, Jzd);
        xdd = 0.0;
        zdd = 0.0;
        for (int a = 0; a < N; ++a) {
            xdd += Jxd[a] * qd[a] + Jx[a] * qdd[a];
            zdd += Jzd[a] * qd[a] + Jz[a] * qdd[a];
        }
    }

    /// Potential energy of the physical chain relative to upright.
    double potential_energy(const Trig& t) const {
        double v = 0.0;
        for (int k = 0; k < N; ++k) v += g * W[k] * (t.cphi[k] - 1.0);
        return v;
    }

    double kinetic_energy(const Trig& t, const double* qd) const {
        double M[N][N];
        mass_matrix(t, M);
        double e = 0.0;
        for (int a = 0; a < N; ++a)
            for (int b = 0; b < N; ++b) e += 0.5 * qd[a] * M[a][b] * qd[b];
        return e;
    }
};

template <typename F>
auto dispatch_chain(const PendulumModel& model, F&& f) {
    if (model.gait() == Gait::Stance) {
        Chain<3> chain(model);
        return f(chain);
    }
    Chain<2> chain(model);
    return f(chain);
}

} // namespace detail

inline DynamicsTerms dynamics_terms(const PendulumModel& model, const JointState& state) {
    check_state_dim(model, state);
    return detail::dispatch_chain(model, [&](const auto& chain) {
        constexpr int N = std::remove_reference_t<decltype(chain)>::dof;
        auto t = chain.trig(state.angles.data());
        double M[N][N], C[N][N], G[N];
        chain.mass_matrix(t, M);
        chain.coriolis_matrix(t, state.rates.data(), C);
        chain.gravity_vector(t, G);
        DynamicsTerms out;
        out.mass_matrix.resize(N, N);
        out.coriolis_matrix.resize(N, N);
        out.gravity_vector.resize(N);
        for (int a = 0; a < N; ++a) {
            out.gravity_vector[a] = G[a];
            for (int b = 0; b < N; ++b) {
                out.mass_matrix(a, b) = M[a][b];
                out.coriolis_matrix(a, b) = C[a][b];
            }
        }
        return out;
    });
}

inline StateDerivative forward_dynamics(const PendulumModel& model, const JointState& state,
                                        const VecJ& torques) {
    check_state_dim(model, state);
    require(torques.size() == model.dof(), "dimension-mismatch",
            "torque dimension does not match gait");
    return detail::dispatch_chain(model, [&](const auto& chain) {
        StateDerivative d;
        d.rates = state.rates;
        d.accelerations.resize(model.dof());
        chain.accelerations(state.angles.data(), state.rates.data(), torques.data(),
                            d.accelerations.data());
        return d;
    });
}

namespace detail {

template <bool BodyCom>
ComKinematics com_kinematics_impl(const PendulumModel& model, const JointState& state) {
    check_state_dim(model, state);
    return dispatch_chain(model, [&](const auto& chain) {
        constexpr int N = std::remove_reference_t<decltype(chain)>::dof;
        const auto& coeff = BodyCom ? chain.lam : chain.lc;
        auto t = chain.trig(state.angles.data());
        ComKinematics out;
        chain.com_position(t, coeff, out.position.x(), out.position.y());
        double Jx[N], Jz[N], Jxd[N], Jzd[N];
        chain.com_jacobian(t, coeff, Jx, Jz);
        chain.com_jacobian_rate(t, coeff, state.rates.data(), Jxd, Jzd);
        out.jacobian.resize(2, N);
        out.jacobian_rate.resize(2, N);
        for (int a = 0; a < N; ++a) {
            out.jacobian(0, a) = Jx[a];
            out.jacobian(1, a) = Jz[a];
            out.jacobian_rate(0, a) = Jxd[a];
            out.jacobian_rate(1, a) = Jzd[a];
        }
        return out;
    });
}

} // namespace detail

/// COM point in the per-link reported coordinates (the chain of com_offset
/// values); this is the quantity IP curves are normalized against.
inline ComKinematics com_kinematics(const PendulumModel& model, const JointState& state) {
    return detail::com_kinematics_impl<false>(model, state);
}

/// Mass-weighted COM of the segment chain. Ground reactions follow this
/// point: F = m_t * body-COM acceleration.
inline ComKinematics body_com_kinematics(const PendulumModel& model,
                                         const JointState& state) {
    return detail::com_kinematics_impl<true>(model, state);
}

inline GroundReaction ground_reaction(const PendulumModel& model, const JointState& state,
                                      const VecJ& accelerations) {
    check_state_dim(model, state);
    require(accelerations.size() == model.dof(), "dimension-mismatch",
            "acceleration dimension does not match gait");
    return detail::dispatch_chain(model, [&](const auto& chain) {
        auto t = chain.trig(state.angles.data());
        double xdd, zdd;
        chain.com_acceleration(t, chain.lam, state.rates.data(), accelerations.data(),
                               xdd, zdd);
        return GroundReaction{chain.mt * xdd, chain.mt * (zdd + chain.g)};
    });
}

/// d G / d theta at the upright equilibrium (analytic).
inline MatJ gravity_gradient_upright(const PendulumModel& model) {
    return detail::dispatch_chain(model, [&](const auto& chain) {
        constexpr int N = std::remove_reference_t<decltype(chain)>::dof;
        // G_a = -g sum_{k >= a} W_k sin(phi_k)  =>  dG_a/db|_0 = -g sum_{k >= max(a,b)} W_k
        MatJ H(N, N);
        for (int a = 0; a < N; ++a) {
            for (int b = 0; b < N; ++b) {
                double acc = 0.0;
                for (int k = std::max(a, b); k < N; ++k) acc += chain.W[k];
                H(a, b) = -chain.g * acc;
            }
        }
        return H;
    });
}

/// Potential energy of the segment chain, zero at the upright equilibrium.
inline double potential_energy(const PendulumModel& model, const JointState& state) {
    check_state_dim(model, state);
    return detail::dispatch_chain(model, [&](const auto& chain) {
        return chain.potential_energy(chain.trig(state.angles.data()));
    });
}

inline double kinetic_energy(const PendulumModel& model, const JointState& state) {
    check_state_dim(model, state);
    return detail::dispatch_chain(model, [&](const auto& chain) {
        return chain.kinetic_energy(chain.trig(state.angles.data()), state.rates.data());
    });
}

} // namespace iplab
