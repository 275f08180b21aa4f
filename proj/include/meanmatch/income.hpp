#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace meanmatch::income {

/// Right-tailed Pareto log-normal: alpha tail, nu location (log scale),
/// tau variance parameter.
struct ParetoLogNormalParams {
    double alpha = 1.0;
    double nu = 0.0;
    double tau = 1.0;
    bool valid() const { return alpha > 0.0 && tau > 0.0; }
};

/// Generalized Pareto: beta tail, mu location, sigma scale.
struct GeneralizedParetoParams {
    double beta = 1.0;
    double mu = 0.0;
    double sigma = 1.0;
    bool valid() const { return beta > 0.0 && sigma > 0.0 && mu >= 0.0; }
};

/// Standard normal CDF via erfc; absolute error below 1e-15.
double normal_cdf(double z);

double plognorm_pdf(const ParetoLogNormalParams& p, double x);
double plognorm_cdf(const ParetoLogNormalParams& p, double x);
/// Bracketed bisection inversion of plognorm_cdf to 1e-8 relative;
/// throws std::runtime_error if the bracket would exceed 1e12.
double plognorm_quantile(const ParetoLogNormalParams& p, double prob);

double gpareto_pdf(const GeneralizedParetoParams& p, double y);
double gpareto_cdf(const GeneralizedParetoParams& p, double y);
double gpareto_quantile(const GeneralizedParetoParams& p, double prob);

/// (probability, quantile) pairs with strictly increasing probabilities.
struct QuantileData {
    std::vector<double> probs;
    std::vector<double> values;
    std::size_t size() const { return probs.size(); }
};

/// Parses CSV rows "prob,value"; '#' comments and a "prob,value" header are skipped.
QuantileData quantile_data_from_csv(const std::string& csv_text);

/// sqrt( (1/n) sum (model-data)^2 / sum model^2 ); rejects an all-zero model vector.
double rrmse(const std::vector<double>& model_q, const std::vector<double>& data_q);

enum class Family { ParetoLogNormal, GeneralizedPareto };

/// How model quantiles are produced inside the calibration objective.
/// GridCdf samples the pdf on the uniform solver grid, forms the normalized
/// right-endpoint cumulative and inverts it piecewise-linearly (the
/// evaluation behind the shipped reference fits). ClosedForm uses the exact
/// distribution functions.
enum class QuantileEval { GridCdf, ClosedForm };

struct CalibrateOptions {
    QuantileEval eval = QuantileEval::GridCdf;
    double grid_x_max = 7000.0;
    std::size_t grid_cells = 200;
    std::size_t max_iters = 5000;
    double simplex_tol = 1e-8;  // relative simplex diameter
};

struct CalibrationResult {
    Family family = Family::ParetoLogNormal;
    ParetoLogNormalParams pln;
    GeneralizedParetoParams gp;
    double rrmse = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Default initial guesses from the data (log-quantile moments for the
/// Pareto log-normal, low-quantile anchors for the generalized Pareto).
ParetoLogNormalParams default_pln_init(const QuantileData& data);
GeneralizedParetoParams default_gp_init(const QuantileData& data);

CalibrationResult calibrate(Family family, const QuantileData& data,
                            const CalibrateOptions& options);
CalibrationResult calibrate(Family family, const QuantileData& data,
                            const ParetoLogNormalParams& init,
                            const CalibrateOptions& options);
CalibrationResult calibrate(Family family, const QuantileData& data,
                            const GeneralizedParetoParams& init,
                            const CalibrateOptions& options);

/// Model quantiles under the chosen evaluation, for diagnostics/tests.
std::vector<double> model_quantiles(Family family, const ParetoLogNormalParams& pln,
                                    const GeneralizedParetoParams& gp,
                                    const std::vector<double>& probs,
                                    const CalibrateOptions& options);

std::string calibration_result_to_json(const CalibrationResult& r);

/// Generic Nelder-Mead simplex minimizer (Lagarias coefficients).
struct NelderMeadResult {
    std::vector<double> x;
    double fx = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, double rel_tol, std::size_t max_iters);

}  // namespace meanmatch::income
