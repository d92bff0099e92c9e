#pragma once

#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include "vicomp/compensation.hpp"
#include "vicomp/lhei.hpp"
#include "vicomp/stimuli.hpp"

namespace vicomp {

// One observer measurement plus the condition it was gathered under.
struct ObserverDatum {
    std::string stimulus_id;
    double response = 0;   // luminance in cd/m2 (achromatic conditions)
    Lab response_lab{};    // matched color (chromatic conditions)
    double ci_low = 0;
    double ci_high = 0;
    // condition metadata
    double bar_width_deg = 0;
    std::string side;      // "white" or "black"
    int color_set = 0;     // 1-based chromatic set index
    double scaling = 1.0;

    void validate_ci() const {
        if (ci_low == 0 && ci_high == 0) return; // no interval recorded
        if (!(ci_low <= response && response <= ci_high))
            throw ParamError("ObserverDatum " + stimulus_id +
                             ": response outside its confidence interval");
    }
};

namespace detail {

inline const BarStimulus& cached_bars(const BarPatternSpec& spec, const ScreenSpec& screen) {
    static std::map<std::string, BarStimulus> cache;
    static std::mutex mutex;
    char key[256];
    std::snprintf(key, sizeof key, "%a|%a|%a|%a|%a|%a|%d|%a|%a|%a", spec.inducing_bar_width_deg,
                  spec.comparison_bar_width_deg, spec.gray_luminance, spec.white_luminance,
                  spec.black_luminance, spec.background_luminance, spec.pattern_size,
                  spec.pixels_per_degree, screen.gamma, screen.scale_factor);
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    return cache.emplace(key, generate_bars(spec, screen)).first->second;
}

inline const RingStimulus& cached_rings(const RingPatternSpec& spec, const ScreenSpec& screen) {
    static std::map<std::string, RingStimulus> cache;
    static std::mutex mutex;
    std::ostringstream os;
    os << std::hexfloat << spec.pattern_diameter_deg << '|' << spec.center_diameter_deg << '|'
       << spec.n_inducing_rings << '|' << spec.pattern_size << '|' << spec.pixels_per_degree << '|'
       << screen.gamma << '|' << screen.scale_factor;
    for (const Lab& c : {spec.inducer_colors[0], spec.inducer_colors[1], spec.test_color,
                         spec.background})
        os << '|' << c.l << ',' << c.a << ',' << c.b;
    const std::string key = os.str();
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    return cache.emplace(key, generate_rings(spec, screen)).first->second;
}

} // namespace detail

// Sum over all (width, side) conditions of the squared luminance difference
// between the observer response and the mean of the compensated image over
// the matching comparison-bar mask. All widths share one parameter vector.
inline double achromatic_objective(const CompensationParams& params,
                                   const std::vector<ObserverDatum>& data,
                                   const BarPatternSpec& base_spec, const ScreenSpec& src,
                                   const ScreenSpec& dst) {
    if (data.empty()) throw ParamError("achromatic_objective: no observer data");
    // one compensation per distinct width
    std::map<double, std::pair<double, double>> model; // width -> (white side, black side)
    double total = 0;
    for (const ObserverDatum& d : data) {
        d.validate_ci();
        auto it = model.find(d.bar_width_deg);
        if (it == model.end()) {
            BarPatternSpec spec = base_spec;
            spec.comparison_bar_width_deg = d.bar_width_deg;
            const BarStimulus& stim = detail::cached_bars(spec, src);
            const TriImage comp = compensate(stim.image, src, dst, params);
            const Plane lum = luminance_cdm2(comp, dst, spec.white_luminance);
            it = model
                     .emplace(d.bar_width_deg,
                              std::make_pair(mean_over_mask(lum, stim.white_side_mask),
                                             mean_over_mask(lum, stim.black_side_mask)))
                     .first;
        }
        double m;
        if (d.side == "white")
            m = it->second.first;
        else if (d.side == "black")
            m = it->second.second;
        else
            throw ParamError("achromatic_objective: datum " + d.stimulus_id +
                             " has no matching stimulus side '" + d.side + "'");
        const double e = d.response - m;
        total += e * e;
    }
    return total;
}

// Maximum over the training sets of the CIELAB distance between the
// compensated test-ring mean and the observer-matched color.
inline double chromatic_objective(const CompensationParams& params,
                                  const std::vector<ObserverDatum>& data,
                                  const std::map<int, RingPatternSpec>& ring_specs,
                                  const ScreenSpec& src, const ScreenSpec& dst,
                                  const std::vector<int>& train_sets) {
    if (train_sets.empty()) throw ParamError("chromatic_objective: empty training set list");
    double worst = 0;
    for (int set : train_sets) {
        auto spec_it = ring_specs.find(set);
        if (spec_it == ring_specs.end())
            throw ParamError("chromatic_objective: no ring spec for set " + std::to_string(set));
        const ObserverDatum* datum = nullptr;
        for (const ObserverDatum& d : data)
            if (d.color_set == set) {
                datum = &d;
                break;
            }
        if (!datum)
            throw ParamError("chromatic_objective: missing observer data for set " +
                             std::to_string(set));
        const RingStimulus& stim = detail::cached_rings(spec_it->second, src);
        const TriImage lab = compensate_to_lab(stim.test_image, src, dst, params);
        const Lab model{mean_over_mask(lab.channel(0), stim.test_mask),
                        mean_over_mask(lab.channel(1), stim.test_mask),
                        mean_over_mask(lab.channel(2), stim.test_mask)};
        worst = std::max(worst, delta_e(model, datum->response_lab));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Derivative-free minimization

struct FitOptions {
    int max_evals = 5000;
    double simplex_tol = 1e-6;   // simplex diameter
    double objective_tol = 1e-8; // objective spread across vertices
    double initial_step = 0.1;   // relative first-simplex step
    int max_restarts = 20;
    unsigned seed = 0; // kept for interface stability; the search is deterministic
};

struct FitResult {
    std::vector<double> params;
    double objective_value = 0;
    int evaluations = 0;
    bool converged = false;
    std::vector<double> trace; // best objective after each accepted iteration
};

// Nelder-Mead simplex with projection onto box bounds, deterministic
// restarts around the incumbent, and a hard evaluation budget. Never
// returns a point worse than the start.
inline FitResult fit(const std::function<double(const std::vector<double>&)>& objective,
                     const std::vector<double>& initial, const std::vector<double>& lower,
                     const std::vector<double>& upper, const FitOptions& options = {}) {
    const size_t n = initial.size();
    if (n == 0) throw ParamError("fit: empty parameter vector");
    if (lower.size() != n || upper.size() != n)
        throw ParamError("fit: bounds dimension mismatch");
    for (size_t i = 0; i < n; ++i)
        if (lower[i] > upper[i]) throw ParamError("fit: inconsistent bounds");

    FitResult result;
    auto project = [&](std::vector<double> x) {
        for (size_t i = 0; i < n; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
        return x;
    };
    auto eval = [&](const std::vector<double>& x) {
        const double v = objective(x);
        ++result.evaluations;
        if (std::isnan(v)) {
            std::ostringstream os;
            os << "fit: objective returned NaN at (";
            for (size_t i = 0; i < n; ++i) os << (i ? ", " : "") << x[i];
            os << ")";
            throw ParamError(os.str());
        }
        return v;
    };

    std::vector<double> best = project(initial);
    double fbest = eval(best);
    if (!std::isfinite(fbest)) throw ParamError("fit: objective not finite at the initial point");
    result.trace.push_back(fbest);

    double step_scale = options.initial_step;
    int stalled_restarts = 0;
    for (int restart = 0; restart <= options.max_restarts; ++restart) {
        // simplex around the incumbent
        std::vector<std::vector<double>> vx(n + 1, best);
        std::vector<double> vf(n + 1);
        for (size_t i = 0; i < n; ++i) {
            double step = step_scale * std::max(std::abs(best[i]), 0.1);
            if (best[i] + step > upper[i]) step = -step;
            vx[i + 1][i] = std::clamp(best[i] + step, lower[i], upper[i]);
        }
        for (size_t i = 0; i < n + 1; ++i) {
            if (result.evaluations >= options.max_evals) break;
            vf[i] = eval(vx[i]);
        }
        if (result.evaluations >= options.max_evals) break;

        const double f_at_restart = fbest;
        while (result.evaluations < options.max_evals) {
            // order vertices
            std::vector<size_t> idx(n + 1);
            for (size_t i = 0; i <= n; ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return vf[a] < vf[b]; });
            if (vf[idx[0]] < fbest) {
                fbest = vf[idx[0]];
                best = vx[idx[0]];
            }
            result.trace.push_back(fbest);

            double diameter = 0;
            for (size_t i = 1; i <= n; ++i)
                for (size_t d = 0; d < n; ++d)
                    diameter = std::max(diameter, std::abs(vx[idx[i]][d] - vx[idx[0]][d]));
            const double spread = vf[idx[n]] - vf[idx[0]];
            if (diameter < options.simplex_tol || spread < options.objective_tol) {
                result.converged = true;
                break;
            }

            const size_t worst = idx[n];
            std::vector<double> centroid(n, 0.0);
            for (size_t i = 0; i < n; ++i)
                for (size_t d = 0; d < n; ++d) centroid[d] += vx[idx[i]][d] / n;

            auto along = [&](double t) {
                std::vector<double> x(n);
                for (size_t d = 0; d < n; ++d)
                    x[d] = centroid[d] + t * (centroid[d] - vx[worst][d]);
                return project(std::move(x));
            };

            const std::vector<double> xr = along(1.0);
            const double fr = eval(xr);
            if (fr < vf[idx[0]]) {
                const std::vector<double> xe = along(2.0);
                const double fe = result.evaluations < options.max_evals ? eval(xe) : fr;
                if (fe < fr) {
                    vx[worst] = xe;
                    vf[worst] = fe;
                } else {
                    vx[worst] = xr;
                    vf[worst] = fr;
                }
            } else if (fr < vf[idx[n - 1]]) {
                vx[worst] = xr;
                vf[worst] = fr;
            } else {
                const bool outside = fr < vf[worst];
                const std::vector<double> xc = along(outside ? 0.5 : -0.5);
                const double fc = eval(xc);
                if (fc < (outside ? fr : vf[worst])) {
                    vx[worst] = xc;
                    vf[worst] = fc;
                } else {
                    // shrink towards the best vertex
                    for (size_t i = 1; i <= n; ++i) {
                        const size_t j = idx[i];
                        for (size_t d = 0; d < n; ++d)
                            vx[j][d] = vx[idx[0]][d] + 0.5 * (vx[j][d] - vx[idx[0]][d]);
                        if (result.evaluations >= options.max_evals) break;
                        vf[j] = eval(vx[j]);
                    }
                }
            }
        }

        if (!result.converged) break; // budget exhausted
        stalled_restarts = f_at_restart - fbest <= options.objective_tol ? stalled_restarts + 1 : 0;
        if (stalled_restarts >= 3) break;
        step_scale *= 0.2;
    }

    result.params = best;
    result.objective_value = fbest;
    return result;
}

// ---------------------------------------------------------------------------
// Parameter vector packing for the compensation fits

// Layout: n_a, n_b, c1, c2, d1, d2 [, w..., log(sigma)...] for one channel
// group. Sigmas travel in log space so box bounds keep them positive.
inline std::vector<double> pack_compensation(const CompensationParams& p, bool chromatic_group,
                                             bool include_mix) {
    const RationalFilterCoeffs& c = chromatic_group ? p.chromatic : p.achromatic;
    std::vector<double> x{p.n_a, p.n_b, c.c1, c.c2, c.d1, c.d2};
    if (include_mix) {
        for (const auto& t : c.mix.terms) x.push_back(t.weight);
        for (const auto& t : c.mix.terms) x.push_back(std::log(t.sigma));
    }
    return x;
}

inline CompensationParams unpack_compensation(const std::vector<double>& x,
                                              const CompensationParams& reference,
                                              bool chromatic_group, bool include_mix) {
    CompensationParams p = reference;
    RationalFilterCoeffs& c = chromatic_group ? p.chromatic : p.achromatic;
    const size_t terms = c.mix.terms.size();
    const size_t expected = 6 + (include_mix ? 2 * terms : 0);
    if (x.size() != expected)
        throw ParamError("unpack_compensation: expected " + std::to_string(expected) +
                         " parameters, got " + std::to_string(x.size()));
    p.n_a = x[0];
    p.n_b = x[1];
    c.c1 = x[2];
    c.c2 = x[3];
    c.d1 = x[4];
    c.d2 = x[5];
    if (include_mix)
        for (size_t i = 0; i < terms; ++i) {
            c.mix.terms[i].weight = x[6 + i];
            c.mix.terms[i].sigma = std::exp(x[6 + terms + i]);
        }
    return p;
}

// ---------------------------------------------------------------------------
// LHEI validation fit (Monnier protocol)

struct MonnierCondition {
    RingPatternSpec spec;
    double observed_shift = 0; // op2 difference, test minus comparison
};

// Display image to the opponent representation the evolution runs on:
// cone transform, per-channel saturating nonlinearity with the
// histogram-equalizing exponent, opponent split.
inline TriImage to_opponent_for_lhei(const TriImage& display, const ScreenSpec& screen) {
    TriImage lms = cat02_transform(
        primary_transform(eotf(display, screen, EotfDirection::Decode), screen,
                          PrimaryDirection::RgbToXyz),
        Cat02Direction::XyzToLms);
    for (int ch = 0; ch < 3; ++ch) {
        for (double& v : lms.channel(ch))
            if (v < 0) v = 0;
        const double i_s = semi_saturation(lms.channel(ch));
        const double n = select_exponent(lms.channel(ch), i_s);
        lms.channel(ch) = nr_forward(lms.channel(ch), {n, i_s, 1.0});
    }
    return opponent_transform(lms, OpponentDirection::LmsToOpp);
}

// Sum of squared differences between the model shift and the observed shift
// over all conditions.
inline double lhei_objective(const LheiParams& params,
                             const std::vector<MonnierCondition>& conditions,
                             const ScreenSpec& screen) {
    if (conditions.empty()) throw ParamError("lhei_objective: no conditions");
    double total = 0;
    for (const MonnierCondition& c : conditions) {
        const RingStimulus& stim = detail::cached_rings(c.spec, screen);
        const TriImage test = to_opponent_for_lhei(stim.test_image, screen);
        const TriImage comp = to_opponent_for_lhei(stim.comparison_image, screen);
        const double shift = monnier_shift(test, comp, stim.test_mask, params);
        const double e = shift - c.observed_shift;
        total += e * e;
    }
    return total;
}

// Layout: alpha, beta, gamma, gain_pos, gain_neg, slope, log sigmas of the
// two kernels (weights stay fixed).
inline std::vector<double> pack_lhei(const LheiParams& p) {
    std::vector<double> x{p.alpha,         p.beta,          p.gamma,
                          p.sigmoid.gain_pos, p.sigmoid.gain_neg, p.sigmoid.slope};
    for (const auto& t : p.local_mean_kernel.terms) x.push_back(std::log(t.sigma));
    for (const auto& t : p.contrast_kernel.terms) x.push_back(std::log(t.sigma));
    return x;
}

inline LheiParams unpack_lhei(const std::vector<double>& x, const LheiParams& reference) {
    LheiParams p = reference;
    const size_t km = p.local_mean_kernel.terms.size();
    const size_t kc = p.contrast_kernel.terms.size();
    if (x.size() != 6 + km + kc)
        throw ParamError("unpack_lhei: expected " + std::to_string(6 + km + kc) + " parameters");
    p.alpha = x[0];
    p.beta = x[1];
    p.gamma = x[2];
    p.sigmoid.gain_pos = x[3];
    p.sigmoid.gain_neg = x[4];
    p.sigmoid.slope = x[5];
    for (size_t i = 0; i < km; ++i) p.local_mean_kernel.terms[i].sigma = std::exp(x[6 + i]);
    for (size_t i = 0; i < kc; ++i) p.contrast_kernel.terms[i].sigma = std::exp(x[6 + km + i]);
    return p;
}

// ---------------------------------------------------------------------------
// Leave-one-set-out error matrix

struct Table3Report {
    std::array<std::array<double, 4>, 4> errors{}; // [set][fold]; fold f tests set f+1
    std::array<double, 4> test_error{};
    std::array<double, 4> original_error{};
    std::array<double, 4> improvement_pct{};

    std::string format() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2);
        os << "        fold1   fold2   fold3   fold4   original  improvement\n";
        for (int s = 0; s < 4; ++s) {
            os << "set " << s + 1 << " ";
            for (int f = 0; f < 4; ++f)
                os << std::setw(7) << errors[s][f] << (f == s ? "*" : " ");
            os << std::setw(9) << original_error[s] << "  " << std::setw(9) << improvement_pct[s]
               << "%\n";
        }
        os << "(* = held-out test entry)\n";
        return os.str();
    }
};

// Errors for four leave-one-out folds: params_per_fold[f] was trained on all
// sets except f+1. Reports the full error matrix, the uncorrected-image
// error and the improvement on each held-out set.
inline Table3Report table3_report(const std::vector<CompensationParams>& params_per_fold,
                                  const std::vector<ObserverDatum>& data,
                                  const std::map<int, RingPatternSpec>& ring_specs,
                                  const ScreenSpec& src, const ScreenSpec& dst) {
    if (params_per_fold.size() != 4)
        throw ParamError("table3_report: expected exactly 4 folds");
    Table3Report rep;
    for (int s = 1; s <= 4; ++s) {
        for (int f = 0; f < 4; ++f)
            rep.errors[s - 1][f] =
                chromatic_objective(params_per_fold[f], data, ring_specs, src, dst, {s});
        rep.test_error[s - 1] = rep.errors[s - 1][s - 1];

        // uncorrected: the input image's ring color against the observer match
        auto spec_it = ring_specs.find(s);
        if (spec_it == ring_specs.end())
            throw ParamError("table3_report: no ring spec for set " + std::to_string(s));
        const RingStimulus& stim = detail::cached_rings(spec_it->second, src);
        const TriImage xyz = primary_transform(
            eotf(stim.test_image, src, EotfDirection::Decode), src, PrimaryDirection::RgbToXyz);
        const TriImage lab = xyz_to_lab(xyz, xy_to_xyz(src.white));
        const Lab uncorrected{mean_over_mask(lab.channel(0), stim.test_mask),
                              mean_over_mask(lab.channel(1), stim.test_mask),
                              mean_over_mask(lab.channel(2), stim.test_mask)};
        const ObserverDatum* datum = nullptr;
        for (const ObserverDatum& d : data)
            if (d.color_set == s) {
                datum = &d;
                break;
            }
        if (!datum)
            throw ParamError("table3_report: missing observer data for set " + std::to_string(s));
        rep.original_error[s - 1] = delta_e(uncorrected, datum->response_lab);
        rep.improvement_pct[s - 1] =
            rep.original_error[s - 1] > 0
                ? (rep.original_error[s - 1] - rep.test_error[s - 1]) / rep.original_error[s - 1] *
                      100.0
                : 100.0;
    }
    return rep;
}

} // namespace vicomp
