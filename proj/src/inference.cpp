#include "mrblat/inference.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mrblat {

namespace {

constexpr double kLog2PiE = 2.8378770664093453;  // ln(2 pi e)

struct ObjectiveParts {
    double match = 0.0;    // -|alpha C|
    double energy = 0.0;   // |alpha|^2 <S|L|S>
    double trace = 0.0;    // |alpha|^2 (var_u Juu + var_v Jvv)
    double entropy = 0.0;  // Gaussian entropy of the position block
};

ObjectiveParts evaluate_parts(const Vec4& mean_local, const Vec4& logvar,
                              const ObservationBlock& obs, Cplx alpha_hat,
                              const RadarModel& model) {
    const TargetGeom g = local_target_geometry(mean_local[0], mean_local[1], model);
    const Correlation corr = correlate_template(model, obs.z, g, false);
    const Mat2 gram = template_gradient_gram(model, g);
    const double a2 = std::norm(alpha_hat);

    ObjectiveParts parts;
    parts.match = -std::abs(alpha_hat * corr.c);
    parts.energy = a2 * model.energy_weighted;
    parts.trace = a2 * (std::exp(logvar[0]) * gram(0, 0) + std::exp(logvar[1]) * gram(1, 1));
    parts.entropy = kLog2PiE + 0.5 * (logvar[0] + logvar[1]);
    return parts;
}

}  // namespace

Cplx alpha_ml_estimate(const ObservationBlock& obs, const KinematicState& phi_local,
                       const RadarModel& model) {
    const TargetGeom g = local_target_geometry(phi_local.x, phi_local.y, model);
    const Correlation corr = correlate_template(model, obs.z, g, false);
    const double energy = model.energy_weighted;
    if (!(energy > 0.0)) throw NumericError("alpha_ml_estimate: zero template energy");
    return corr.c / energy;
}

double kl_objective(const Vec4& mean_local, const Vec4& logvar, const ObservationBlock& obs,
                    Cplx alpha_hat, const RadarModel& model) {
    const ObjectiveParts p = evaluate_parts(mean_local, logvar, obs, alpha_hat, model);
    if (!std::isfinite(p.match)) throw NumericError("kl_objective: match term non-finite");
    if (!std::isfinite(p.trace)) throw NumericError("kl_objective: trace term non-finite");
    if (!std::isfinite(p.entropy)) throw NumericError("kl_objective: entropy term non-finite");
    return p.match + p.energy + p.trace - p.entropy;
}

KlGradient kl_objective_gradient(const Vec4& mean_local, const Vec4& logvar,
                                 const ObservationBlock& obs, Cplx alpha_hat,
                                 const RadarModel& model) {
    const double u = mean_local[0];
    const double v = mean_local[1];
    const TargetGeom g = local_target_geometry(u, v, model);
    const Correlation corr = correlate_template(model, obs.z, g, true);
    const double a2 = std::norm(alpha_hat);
    const double amag = std::sqrt(a2);

    KlGradient out;

    // d(-|alpha C|)/dp = -|alpha| Re(conj(C) dC/dp) / |C|
    const double cmag = std::abs(corr.c);
    if (cmag > 0.0) {
        out.d_mean[0] = -amag * (std::conj(corr.c) * corr.dc_du).real() / cmag;
        out.d_mean[1] = -amag * (std::conj(corr.c) * corr.dc_dv).real() / cmag;
    }

    // Trace term: var_u Juu + var_v Jvv with J = gradient Gram; differentiate
    // the closed form through b = kappa cos(theta), theta_p and delta_p.
    const double kappa = 2.0 * kPi / model.cfg.wavelength();
    const double r = g.r;
    const double r2 = r * r;
    const double r3 = r2 * r;
    const double r4 = r2 * r2;
    const double b = kappa * g.cos_th;
    const double b_u = kappa * (-v * u / r3);
    const double b_v = kappa * (u * u / r3);
    const double tu = g.th_u, tv = g.th_v;
    const double tuu = -2.0 * u * v / r4;
    const double tuv = (u * u - v * v) / r4;
    const double tvv = 2.0 * u * v / r4;
    const double dscale = 2.0 * model.cfg.sample_rate / kSpeedOfLight;
    const double du = g.del_u, dv = g.del_v;
    const double duu = dscale * v * v / r3;
    const double duv = -dscale * u * v / r3;
    const double dvv = dscale * u * u / r3;
    const double k00 = model.k00, k01 = model.k01, k11 = model.k11;
    const double inv_sw2 = model.inv_noise_var;

    auto j_diag = [&](double tp, double dp) {
        return inv_sw2 * (b * b * tp * tp * k00 - 2.0 * b * tp * dp * k01 + dp * dp * k11);
    };
    // dJpp/ds for p-diagonal entry with partials (tp_s, dp_s) and db/ds
    auto j_diag_deriv = [&](double tp, double dp, double bs, double tps, double dps) {
        return inv_sw2 * (2.0 * b * tp * (bs * tp + b * tps) * k00 -
                          2.0 * (bs * tp * dp + b * tps * dp + b * tp * dps) * k01 +
                          2.0 * dp * dps * k11);
    };

    const double var_u = std::exp(logvar[0]);
    const double var_v = std::exp(logvar[1]);

    const double djuu_du = j_diag_deriv(tu, du, b_u, tuu, duu);
    const double djuu_dv = j_diag_deriv(tu, du, b_v, tuv, duv);
    const double djvv_du = j_diag_deriv(tv, dv, b_u, tuv, duv);
    const double djvv_dv = j_diag_deriv(tv, dv, b_v, tvv, dvv);

    out.d_mean[0] += a2 * (var_u * djuu_du + var_v * djvv_du);
    out.d_mean[1] += a2 * (var_u * djuu_dv + var_v * djvv_dv);

    out.d_logvar_pos[0] = a2 * var_u * j_diag(tu, du) - 0.5;
    out.d_logvar_pos[1] = a2 * var_v * j_diag(tv, dv) - 0.5;
    return out;
}

DataMessageResult minimize_data_message(const ObservationBlock& obs,
                                        const KinematicState& phi_init_local,
                                        const RadarModel& model, const MinimizeOptions& opts) {
    const Cplx alpha_hat = alpha_ml_estimate(obs, phi_init_local, model);

    using Param = Eigen::Vector4d;  // (u, v, log var_u, log var_v)
    Param z;
    z << phi_init_local.x, phi_init_local.y, 2.0 * std::log(opts.init_sigma),
        2.0 * std::log(opts.init_sigma);

    const double inf = std::numeric_limits<double>::infinity();
    // Out-of-domain candidates (zero range, overflowing variances) read as
    // +inf so the line search backs off instead of aborting.
    auto eval = [&](const Param& p) {
        if (std::abs(p[2]) > 600.0 || std::abs(p[3]) > 600.0) return inf;
        Vec4 mean;
        mean << p[0], p[1], phi_init_local.vx, phi_init_local.vy;
        Vec4 lv;
        lv << p[2], p[3], 0.0, 0.0;
        try {
            const double f = kl_objective(mean, lv, obs, alpha_hat, model);
            return std::isfinite(f) ? f : inf;
        } catch (const NumericError&) {
            return inf;
        }
    };

    const Param fd_step(1e-3, 1e-3, 1e-3, 1e-3);
    auto fd_gradient = [&](const Param& p, double f_center) {
        Param grad;
        for (int i = 0; i < 4; ++i) {
            Param hi = p, lo = p;
            hi[i] += fd_step[i];
            lo[i] -= fd_step[i];
            const double fh = eval(hi);
            const double fl = eval(lo);
            if (std::isfinite(fh) && std::isfinite(fl)) {
                grad[i] = (fh - fl) / (2.0 * fd_step[i]);
            } else if (std::isfinite(fh)) {
                grad[i] = (fh - f_center) / fd_step[i];
            } else if (std::isfinite(fl)) {
                grad[i] = (f_center - fl) / fd_step[i];
            } else {
                grad[i] = 0.0;
            }
        }
        return grad;
    };

    double f = eval(z);
    if (!std::isfinite(f)) {
        throw NumericError("minimize_data_message: objective non-finite at the initial point");
    }
    Param grad = fd_gradient(z, f);
    Mat4 h_inv = Mat4::Identity();
    h_inv(0, 0) = h_inv(1, 1) = 0.25;  // position scale (0.5 m)^2
    h_inv(2, 2) = h_inv(3, 3) = 0.25;

    if (opts.trace) opts.trace->push_back({0, f, Vec4(z[0], z[1], phi_init_local.vx,
                                                      phi_init_local.vy),
                                           Vec2(z[2], z[3])});

    bool converged = false;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        Param dir = -(h_inv * grad);
        if (dir.dot(grad) >= 0.0) {
            h_inv = Mat4::Identity() * 0.25;
            dir = -(h_inv * grad);
        }

        // backtracking Armijo line search; cap the first trial step so a bad
        // curvature model cannot fling the iterate out of range
        double t = 1.0;
        const double pos_step = std::hypot(dir[0], dir[1]);
        const double lv_step = std::max(std::abs(dir[2]), std::abs(dir[3]));
        if (pos_step > 20.0) t = std::min(t, 20.0 / pos_step);
        if (lv_step > 10.0) t = std::min(t, 10.0 / lv_step);
        double f_new = f;
        Param z_new = z;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            const Param cand = z + t * dir;
            const double fc = eval(cand);
            if (fc <= f + 1e-4 * t * grad.dot(dir)) {
                z_new = cand;
                f_new = fc;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if (!improved) {
            converged = true;  // no descent available along the model direction
            break;
        }

        const Param s = z_new - z;
        const Param grad_new = fd_gradient(z_new, f_new);
        const Param y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const Mat4 eye = Mat4::Identity();
            const Mat4 v = eye - (s * y.transpose()) / sy;
            h_inv = v * h_inv * v.transpose() + (s * s.transpose()) / sy;
        }

        const double decrease = f - f_new;
        const double step_norm = s.norm();
        z = z_new;
        f = f_new;
        grad = grad_new;

        if (opts.trace) opts.trace->push_back({it + 1, f, Vec4(z[0], z[1], phi_init_local.vx,
                                                               phi_init_local.vy),
                                               Vec2(z[2], z[3])});

        if (decrease < opts.rel_tol * (std::abs(f) + 1.0) && step_norm < opts.step_tol) {
            converged = true;
            break;
        }
    }

    DataMessageResult res;
    res.message.mean << z[0], z[1], phi_init_local.vx, phi_init_local.vy;
    res.message.precision = Mat4::Zero();
    res.message.precision(0, 0) = std::exp(-z[2]);
    res.message.precision(1, 1) = std::exp(-z[3]);
    res.message.low_confidence = !converged;
    res.objective = f;
    res.iterations = it;
    res.low_confidence = !converged;
    return res;
}

GaussianMessage prediction_message(const PosteriorSlice& prev, const GammaSurrogate& gamma,
                                   const KinematicMatrices& m) {
    GaussianMessage msg;
    msg.mean = m.T * prev.mean;
    msg.precision = process_noise_precision(gamma.mean(), m);
    return msg;
}

GaussianMessage smoothing_message(const PosteriorSlice& next, const GammaSurrogate& gamma,
                                  const KinematicMatrices& m) {
    GaussianMessage msg;
    // T(dt)^-1 = T(-dt), exactly.
    Mat4 t_inv = Mat4::Identity();
    t_inv(0, 2) = -m.dt;
    t_inv(1, 3) = -m.dt;
    msg.mean = t_inv * next.mean;
    const Mat4 lp = process_noise_precision(gamma.mean(), m);
    msg.precision = m.T.transpose() * lp * m.T;
    return msg;
}

PosteriorSlice combine_gaussians(const std::vector<GaussianMessage>& messages) {
    if (messages.empty()) throw NumericError("combine_gaussians: no messages");
    Mat4 lam = Mat4::Zero();
    Vec4 eta = Vec4::Zero();
    for (const auto& msg : messages) {
        lam += msg.precision;
        eta += msg.precision * msg.mean;
    }

    const Eigen::LDLT<Mat4> ldlt(lam);
    const Vec4 d = ldlt.vectorD();
    const double d_max = d.maxCoeff();
    if (!(d_max > 0.0) || d.minCoeff() <= 1e-12 * d_max) {
        // slow path: name the null directions in the error
        Eigen::SelfAdjointEigenSolver<Mat4> eig(lam);
        const double max_ev = std::max(eig.eigenvalues().maxCoeff(), 0.0);
        std::ostringstream oss;
        oss << "combine_gaussians: singular precision; null directions:";
        for (int i = 0; i < 4; ++i) {
            if (eig.eigenvalues()[i] <= 1e-12 * max_ev) {
                oss << " [" << eig.eigenvectors().col(i).transpose() << "]";
            }
        }
        throw NumericError(oss.str());
    }

    PosteriorSlice slice;
    slice.mean = ldlt.solve(eta);
    slice.cov = ldlt.solve(Mat4::Identity());
    // symmetrize against roundoff
    slice.cov = 0.5 * (slice.cov + slice.cov.transpose()).eval();
    return slice;
}

GammaSurrogate update_lambda_a(const std::vector<PosteriorSlice>& slices,
                               const KinematicMatrices& m, double prior_shape,
                               double prior_rate) {
    if (slices.size() < 2) {
        throw NumericError("update_lambda_a: need at least 2 slices");
    }
    const int n_trans = static_cast<int>(slices.size()) - 1;
    const Vec4 g_inv_diag = m.G.diagonal().cwiseInverse();

    Vec4 v_sum = Vec4::Zero();
    for (size_t n = 1; n < slices.size(); ++n) {
        const Vec4 d = slices[n].mean - m.T * slices[n - 1].mean;
        const Mat4 spread = slices[n].cov + m.T * slices[n - 1].cov * m.T.transpose();
        for (int i = 0; i < 4; ++i) {
            v_sum[i] += g_inv_diag[i] * g_inv_diag[i] * (d[i] * d[i] + spread(i, i));
        }
    }

    GammaSurrogate out;
    out.prior_shape = prior_shape;
    out.prior_rate = prior_rate;
    out.shape = Vec4::Constant(0.5 * (n_trans + prior_shape));
    out.rate = 0.5 * (Vec4::Constant(prior_rate) + v_sum);
    return out;
}

void write_objective_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream f(path);
    if (!f) throw NumericError("write_objective_trace_csv: cannot open " + path);
    f << "iteration,objective,u,v,vx,vy,logvar_u,logvar_v\n";
    for (const auto& row : trace) {
        f << row.iteration << ',' << row.objective << ',' << row.mean[0] << ',' << row.mean[1]
          << ',' << row.mean[2] << ',' << row.mean[3] << ',' << row.logvar_pos[0] << ','
          << row.logvar_pos[1] << '\n';
    }
}

}  // namespace mrblat
