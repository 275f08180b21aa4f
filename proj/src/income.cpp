#include "meanmatch/income.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace meanmatch::income {

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

double plognorm_pdf(const ParetoLogNormalParams& p, double x) {
    if (x <= 0.0) return 0.0;
    const double lx = std::log(x);
    const double tail = std::exp(p.alpha * p.nu + 0.5 * p.alpha * p.alpha * p.tau * p.tau
                                 - (p.alpha + 1.0) * lx);
    return p.alpha * tail * normal_cdf((lx - p.nu - p.alpha * p.tau * p.tau) / p.tau);
}

double plognorm_cdf(const ParetoLogNormalParams& p, double x) {
    if (x <= 0.0) return 0.0;
    const double lx = std::log(x);
    const double lognormal_part = normal_cdf((lx - p.nu) / p.tau);
    const double pareto_part =
        std::exp(-p.alpha * lx + p.alpha * p.nu + 0.5 * p.alpha * p.alpha * p.tau * p.tau)
        * normal_cdf((lx - p.nu - p.alpha * p.tau * p.tau) / p.tau);
    double f = lognormal_part - pareto_part;
    if (f < 0.0) f = 0.0;
    if (f > 1.0) f = 1.0;
    return f;
}

double plognorm_quantile(const ParetoLogNormalParams& p, double prob) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw std::invalid_argument("plognorm_quantile: prob must be in (0,1)");
    }
    double lo = std::exp(p.nu);  // positive starting point near the body
    double hi = lo;
    while (plognorm_cdf(p, lo) > prob) {
        lo *= 0.5;
        if (lo < 1e-300) return 0.0;
    }
    while (plognorm_cdf(p, hi) < prob) {
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("plognorm_quantile: bracket exceeds 1e12");
    }
    // bisection to 1e-8 relative
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (plognorm_cdf(p, mid) < prob) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-8 * hi) break;
    }
    return 0.5 * (lo + hi);
}

double gpareto_pdf(const GeneralizedParetoParams& p, double y) {
    if (y <= p.mu) return 0.0;
    const double z = 1.0 + (y - p.mu) / (p.beta * p.sigma);
    return std::pow(z, -p.beta - 1.0) / p.sigma;
}

double gpareto_cdf(const GeneralizedParetoParams& p, double y) {
    if (y <= p.mu) return 0.0;
    const double z = 1.0 + (y - p.mu) / (p.beta * p.sigma);
    return 1.0 - std::pow(z, -p.beta);
}

double gpareto_quantile(const GeneralizedParetoParams& p, double prob) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw std::invalid_argument("gpareto_quantile: prob must be in (0,1)");
    }
    return p.mu + p.beta * p.sigma * (std::pow(1.0 - prob, -1.0 / p.beta) - 1.0);
}

QuantileData quantile_data_from_csv(const std::string& csv_text) {
    QuantileData out;
    std::istringstream in(csv_text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("quantile CSV: expected 'prob,value' row: " + line);
        }
        const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
        try {
            const double prob = std::stod(a);
            const double value = std::stod(b);
            out.probs.push_back(prob);
            out.values.push_back(value);
        } catch (const std::exception&) {
            if (out.size() == 0) continue;  // header row
            throw std::invalid_argument("quantile CSV: bad numeric row: " + line);
        }
    }
    if (out.size() == 0) throw std::invalid_argument("quantile CSV: no data rows");
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(out.probs[i] > 0.0 && out.probs[i] < 1.0) || !(out.values[i] > 0.0)) {
            throw std::invalid_argument("quantile CSV: probs must be in (0,1), values > 0");
        }
        if (i > 0 && out.probs[i] <= out.probs[i - 1]) {
            throw std::invalid_argument("quantile CSV: probabilities must be strictly increasing");
        }
        if (i > 0 && out.values[i] < out.values[i - 1]) {
            throw std::invalid_argument("quantile CSV: quantile values must be nondecreasing");
        }
    }
    return out;
}

double rrmse(const std::vector<double>& model_q, const std::vector<double>& data_q) {
    if (model_q.size() != data_q.size() || model_q.empty()) {
        throw std::invalid_argument("rrmse: vectors must be non-empty and of equal length");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < model_q.size(); ++i) {
        const double d = model_q[i] - data_q[i];
        num += d * d;
        den += model_q[i] * model_q[i];
    }
    if (den == 0.0) throw std::invalid_argument("rrmse: all-zero model vector");
    return std::sqrt(num / static_cast<double>(model_q.size()) / den);
}

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, double rel_tol, std::size_t max_iters) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        double step = 0.05 * std::abs(x0[i]);
        if (step == 0.0) step = 0.25;
        simplex[i + 1][i] += step;
    }
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(simplex[i]);

    auto order = [&]() {
        std::vector<std::size_t> idx(n + 1);
        for (std::size_t i = 0; i <= n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            s2[i] = simplex[idx[i]];
            f2[i] = fv[idx[i]];
        }
        simplex.swap(s2);
        fv.swap(f2);
    };
    auto diameter = [&]() {
        double d = 0.0, scale = 1.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                d = std::max(d, std::abs(simplex[i][j] - simplex[0][j]));
                scale = std::max(scale, std::abs(simplex[0][j]));
            }
        }
        return d / scale;
    };

    NelderMeadResult res;
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        order();
        if (diameter() < rel_tol) {
            res.converged = true;
            break;
        }
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) {
                p[j] = centroid[j] + coef * (simplex[n][j] - centroid[j]);
            }
            return p;
        };
        const auto xr = blend(-1.0);
        const double fr = f(xr);
        if (fr < fv[0]) {
            const auto xe = blend(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            const bool outside = fr < fv[n];
            const auto xc = blend(outside ? -0.5 : 0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fv[n])) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    fv[i] = f(simplex[i]);
                }
            }
        }
    }
    order();
    res.x = simplex[0];
    res.fx = fv[0];
    res.iterations = it;
    return res;
}

namespace {

constexpr double kBadObjective = 1e9;

std::vector<double> grid_quantiles(const std::function<double(double)>& pdf,
                                   const std::vector<double>& probs, double x_max,
                                   std::size_t cells) {
    const double dx = x_max / static_cast<double>(cells);
    // normalized right-endpoint cumulative on the solver grid
    std::vector<double> cum(cells + 1, 0.0);
    for (std::size_t l = 1; l <= cells; ++l) {
        cum[l] = cum[l - 1] + pdf(static_cast<double>(l) * dx) * dx;
    }
    const double total = cum[cells];
    if (!(total > 0.0) || !std::isfinite(total)) return {};
    for (double& c : cum) c /= total;
    std::vector<double> out;
    out.reserve(probs.size());
    for (double p : probs) {
        const auto it = std::lower_bound(cum.begin(), cum.end(), p);
        if (it == cum.begin() || it == cum.end()) return {};
        const std::size_t j = static_cast<std::size_t>(it - cum.begin());
        const double seg = cum[j] - cum[j - 1];
        const double w = seg > 0.0 ? (p - cum[j - 1]) / seg : 0.0;
        out.push_back((static_cast<double>(j - 1) + w) * dx);
    }
    return out;
}

std::vector<double> quantiles_for(Family family, const ParetoLogNormalParams& pln,
                                  const GeneralizedParetoParams& gp,
                                  const std::vector<double>& probs,
                                  const CalibrateOptions& opt) {
    if (opt.eval == QuantileEval::GridCdf) {
        if (family == Family::ParetoLogNormal) {
            return grid_quantiles([&](double x) { return plognorm_pdf(pln, x); }, probs,
                                  opt.grid_x_max, opt.grid_cells);
        }
        return grid_quantiles([&](double y) { return gpareto_pdf(gp, y); }, probs,
                              opt.grid_x_max, opt.grid_cells);
    }
    std::vector<double> out;
    out.reserve(probs.size());
    try {
        for (double p : probs) {
            out.push_back(family == Family::ParetoLogNormal ? plognorm_quantile(pln, p)
                                                            : gpareto_quantile(gp, p));
        }
    } catch (const std::exception&) {
        return {};
    }
    return out;
}

}  // namespace

ParetoLogNormalParams default_pln_init(const QuantileData& data) {
    double mean = 0.0;
    for (double v : data.values) mean += std::log(v);
    mean /= static_cast<double>(data.size());
    double var = 0.0;
    for (double v : data.values) {
        const double d = std::log(v) - mean;
        var += d * d;
    }
    var /= static_cast<double>(data.size() > 1 ? data.size() - 1 : 1);
    ParetoLogNormalParams p;
    p.alpha = 2.0;
    p.nu = mean;
    p.tau = std::max(std::sqrt(var), 0.05);
    return p;
}

GeneralizedParetoParams default_gp_init(const QuantileData& data) {
    GeneralizedParetoParams p;
    p.beta = 5.0;
    p.mu = 0.8 * data.values.front();
    // scale anchor: spread between the lowest quantile and the median-most one
    const std::size_t mid = data.size() / 2;
    p.sigma = std::max(data.values[mid] - data.values.front(), 0.1 * data.values.front());
    return p;
}

CalibrationResult calibrate(Family family, const QuantileData& data,
                            const CalibrateOptions& options) {
    if (family == Family::ParetoLogNormal) {
        return calibrate(family, data, default_pln_init(data), options);
    }
    return calibrate(family, data, default_gp_init(data), options);
}

static CalibrationResult calibrate_impl(Family family, const QuantileData& data,
                                        const std::vector<double>& theta0,
                                        const CalibrateOptions& opt) {
    if (data.size() < 3) throw std::invalid_argument("calibrate: need at least 3 quantile points");

    auto unpack_pln = [](const std::vector<double>& t) {
        ParetoLogNormalParams p;
        p.alpha = std::exp(t[0]);
        p.nu = t[1];
        p.tau = std::exp(t[2]);
        return p;
    };
    auto unpack_gp = [](const std::vector<double>& t) {
        GeneralizedParetoParams p;
        p.beta = std::exp(t[0]);
        p.mu = t[1];
        p.sigma = std::exp(t[2]);
        return p;
    };

    auto objective = [&](const std::vector<double>& theta) {
        ParetoLogNormalParams pln;
        GeneralizedParetoParams gp;
        if (family == Family::ParetoLogNormal) {
            pln = unpack_pln(theta);
            if (!pln.valid()) return kBadObjective;
        } else {
            gp = unpack_gp(theta);
            if (!gp.valid()) return kBadObjective;
        }
        const auto qm = quantiles_for(family, pln, gp, data.probs, opt);
        if (qm.empty()) return kBadObjective;
        double value;
        try {
            value = rrmse(qm, data.values);
        } catch (const std::exception&) {
            return kBadObjective;
        }
        return std::isfinite(value) ? value : kBadObjective;
    };

    // Under the grid evaluation the generalized-Pareto location is not
    // identified: for a fixed tail beta and fixed nodal support, mu and
    // sigma enter the normalized grid CDF only through c = beta*sigma - mu,
    // so the objective is exactly flat for mu inside one grid cell. Project
    // onto the minimal-mu (maximal-support) representative of that
    // equivalence class between restarts, so the reported location does not
    // carry simplex drift along the flat direction.
    auto project_gp_ridge = [&](std::vector<double>& theta) {
        if (family != Family::GeneralizedPareto || opt.eval != QuantileEval::GridCdf) return;
        const GeneralizedParetoParams p = unpack_gp(theta);
        const double dx = opt.grid_x_max / static_cast<double>(opt.grid_cells);
        if (!(p.mu > 0.0) || p.mu >= opt.grid_x_max) return;
        const double c = p.beta * p.sigma - p.mu;
        const double mu_min = std::floor(p.mu / dx) * dx;
        const double sigma_min = (c + mu_min) / p.beta;
        if (sigma_min > 0.0 && mu_min >= 0.0) {
            theta[1] = mu_min;
            theta[2] = std::log(sigma_min);
        }
    };

    std::vector<double> theta = theta0;
    NelderMeadResult nm;
    double best = kBadObjective;
    std::size_t total_iters = 0;
    for (int round = 0; round < 3; ++round) {
        nm = nelder_mead(objective, theta, opt.simplex_tol, opt.max_iters);
        total_iters += nm.iterations;
        theta = nm.x;
        project_gp_ridge(theta);
        if (best - objective(theta) < 1e-14) break;
        best = objective(theta);
    }

    CalibrationResult res;
    res.family = family;
    if (family == Family::ParetoLogNormal) {
        res.pln = unpack_pln(theta);
    } else {
        res.gp = unpack_gp(theta);
    }
    res.rrmse = objective(theta);
    res.iterations = total_iters;
    res.converged = nm.converged;
    return res;
}

CalibrationResult calibrate(Family family, const QuantileData& data,
                            const ParetoLogNormalParams& init, const CalibrateOptions& options) {
    if (family != Family::ParetoLogNormal) {
        throw std::invalid_argument("calibrate: init family mismatch");
    }
    if (!init.valid()) throw std::invalid_argument("calibrate: invalid init");
    return calibrate_impl(family, data, {std::log(init.alpha), init.nu, std::log(init.tau)},
                          options);
}

CalibrationResult calibrate(Family family, const QuantileData& data,
                            const GeneralizedParetoParams& init, const CalibrateOptions& options) {
    if (family != Family::GeneralizedPareto) {
        throw std::invalid_argument("calibrate: init family mismatch");
    }
    if (!init.valid() || !(init.mu >= 0.0)) throw std::invalid_argument("calibrate: invalid init");
    return calibrate_impl(family, data, {std::log(init.beta), init.mu, std::log(init.sigma)},
                          options);
}

std::vector<double> model_quantiles(Family family, const ParetoLogNormalParams& pln,
                                    const GeneralizedParetoParams& gp,
                                    const std::vector<double>& probs,
                                    const CalibrateOptions& options) {
    return quantiles_for(family, pln, gp, probs, options);
}

std::string calibration_result_to_json(const CalibrationResult& r) {
    nlohmann::json j;
    if (r.family == Family::ParetoLogNormal) {
        j["family"] = "pareto_lognormal";
        j["params"] = {{"alpha", r.pln.alpha}, {"nu", r.pln.nu}, {"tau", r.pln.tau}};
    } else {
        j["family"] = "generalized_pareto";
        j["params"] = {{"beta", r.gp.beta}, {"mu", r.gp.mu}, {"sigma", r.gp.sigma}};
    }
    j["rrmse"] = r.rrmse;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    return j.dump(2) + "\n";
}

}  // namespace meanmatch::income
