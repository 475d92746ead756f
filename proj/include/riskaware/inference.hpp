#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "riskaware/choice.hpp"
#include "riskaware/cpt.hpp"
#include "riskaware/errors.hpp"
#include "riskaware/maze.hpp"
#include "riskaware/prospect.hpp"
#include "riskaware/scenarios.hpp"

namespace riskaware {

/// One observed choice (or `count` identical choices) at a decision point.
struct DecisionRecord {
    std::string decision_point;
    std::vector<std::string> actions;
    std::vector<Prospect> prospects;  ///< canonical, aligned with actions
    std::size_t chosen = 0;
    double count = 1.0;
    std::string subject;
};

struct ChoiceDataset {
    std::vector<DecisionRecord> records;

    bool empty() const { return records.empty(); }

    /// Validates and canonicalizes a record before storing it.
    void add(DecisionRecord record) {
        if (record.actions.empty() || record.actions.size() != record.prospects.size())
            throw ValidationError("decision record '" + record.decision_point +
                                  "' needs one prospect per available action");
        if (record.chosen >= record.actions.size())
            throw ValidationError("decision record '" + record.decision_point +
                                  "' chose an action that is not available");
        if (!(record.count >= 0.0) || !std::isfinite(record.count))
            throw ValidationError("decision record counts must be finite and non-negative");
        for (auto& p : record.prospects)
            if (!p.is_canonical()) p = canonicalize(p);
        records.push_back(std::move(record));
    }

    double total_count() const {
        double n = 0.0;
        for (const auto& r : records) n += r.count;
        return n;
    }

    /// Records restricted to one subject.
    ChoiceDataset for_subject(const std::string& subject) const {
        ChoiceDataset out;
        for (const auto& r : records)
            if (r.subject == subject) out.records.push_back(r);
        return out;
    }
};

/// Aggregated counts over a scenario's actions (in scenario order).
inline ChoiceDataset dataset_from_counts(const ScenarioSpec& scenario, std::span<const double> counts,
                                         const std::string& subject = {}) {
    if (counts.size() != scenario.actions.size())
        throw ValidationError("counts must list one entry per scenario action");
    ChoiceDataset ds;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0.0) continue;
        ds.add({scenario.name, scenario.action_ids(), scenario.prospects(), i, counts[i], subject});
    }
    if (ds.empty()) throw ValidationError("all counts are zero");
    return ds;
}

/// Decision records for every step of a maze trajectory that offered more
/// than one legal move (forced moves carry no information about the model).
inline ChoiceDataset dataset_from_trajectories(const MazeSpec& spec, const DualValues& values,
                                               std::span<const Trajectory> trajectories) {
    ChoiceDataset ds;
    for (const auto& t : trajectories) {
        validate_trajectory(spec, t);
        MazeState state = initial_state(spec);
        for (const auto& st : t.steps) {
            const auto options = decision_prospects(spec, values, state);
            if (options.size() > 1) {
                DecisionRecord r;
                r.decision_point = spec.id + "@" + std::to_string(state.position.x) + "," +
                                   std::to_string(state.position.y) + "#" + std::to_string(state.moves_used);
                r.subject = t.subject.empty() ? t.session : t.subject;
                for (std::size_t i = 0; i < options.size(); ++i) {
                    r.actions.emplace_back(to_string(options[i].first));
                    r.prospects.push_back(options[i].second);
                    if (options[i].first == st.action) r.chosen = i;
                }
                ds.add(std::move(r));
            }
            state = step(spec, state, st.action);
        }
    }
    return ds;
}

/// Sum over records of count * log P(chosen action).
inline double log_likelihood(const HumanModel& model, const ChoiceDataset& data) {
    if (data.empty()) throw ValidationError("log-likelihood of an empty dataset");
    const double theta = rationality(model);
    double total = 0.0;
    std::vector<double> u;
    for (const auto& r : data.records) {
        u.clear();
        for (const auto& p : r.prospects) u.push_back(utility(p, model));
        total += r.count * log_softmax_at(u, theta, r.chosen);
    }
    return total;
}

/// KL(empirical || predicted) with the 0 log 0 = 0 convention.
inline double kl_divergence(const ChoiceDistribution& empirical, const ChoiceDistribution& predicted) {
    if (empirical.actions != predicted.actions)
        throw ValidationError("KL divergence needs distributions over the same actions");
    double kl = 0.0;
    for (std::size_t i = 0; i < empirical.probabilities.size(); ++i) {
        const double p = empirical.probabilities[i];
        const double q = predicted.probabilities[i];
        if (p == 0.0) continue;
        if (q <= 0.0) return std::numeric_limits<double>::infinity();
        kl += p * std::log(p / q);
    }
    return std::max(kl, 0.0);
}

/// Natural log of a KL value; a perfect fit (KL 0) maps to -infinity.
inline double log_kl(double kl) {
    return kl > 0.0 ? std::log(kl) : -std::numeric_limits<double>::infinity();
}

/// Upper bounds for the fitting box. Lower bounds are 0 for every parameter
/// except the weighting exponents, which start at gamma_min.
struct ParameterBox {
    double lambda_max = 10.0;
    double theta_max = 20.0;
    double gamma_min = kGammaMin;

    std::vector<std::pair<double, double>> bounds(ModelKind kind) const {
        if (kind == ModelKind::noisy_rational) return {{0.0, theta_max}};
        return {{0.0, 1.0}, {0.0, 1.0}, {0.0, lambda_max}, {gamma_min, 1.0}, {gamma_min, 1.0}, {0.0, theta_max}};
    }
};

inline std::vector<std::string> parameter_names(ModelKind kind) {
    if (kind == ModelKind::noisy_rational) return {"theta"};
    return {"alpha", "beta", "lambda", "gamma", "delta", "theta"};
}

inline HumanModel make_model(ModelKind kind, std::span<const double> x) {
    if (kind == ModelKind::noisy_rational) {
        if (x.size() != 1) throw ValidationError("noisy-rational model takes one parameter");
        return NoisyRationalParams{x[0]};
    }
    if (x.size() != 6) throw ValidationError("CPT model takes six parameters");
    return CptParams{x[0], x[1], x[2], x[3], x[4], x[5]};
}

inline std::vector<double> parameter_vector(const HumanModel& model) {
    if (const auto* nr = std::get_if<NoisyRationalParams>(&model)) return {nr->theta};
    const auto& c = std::get<CptParams>(model);
    return {c.alpha, c.beta, c.lambda, c.gamma_w, c.delta_w, c.theta};
}

struct McmcConfig {
    int chains = 30;
    int samples_per_chain = 1;  ///< retained draws per chain, `thinning` steps apart
    int burn_in = 2000;
    int thinning = 10;
    double default_scale = 0.2;           ///< random-walk step in logit space
    std::vector<double> proposal_scales;  ///< per parameter; empty means default_scale everywhere
    std::optional<std::uint64_t> seed;
    ParameterBox box;
    unsigned threads = 0;  ///< 0 = hardware concurrency; never changes results

    double scale(std::size_t i) const { return proposal_scales.empty() ? default_scale : proposal_scales.at(i); }

    void validate(ModelKind kind) const {
        if (chains <= 0 || samples_per_chain <= 0 || burn_in < 0 || thinning <= 0)
            throw ValidationError("MCMC chain, sample and thinning counts must be positive");
        if (!seed) throw ValidationError("MCMC configuration requires a seed");
        if (!proposal_scales.empty() && proposal_scales.size() != parameter_names(kind).size())
            throw ValidationError("one proposal scale per parameter is required");
        if (!(default_scale > 0.0) || !std::isfinite(default_scale))
            throw ValidationError("proposal scales must be positive");
        for (double s : proposal_scales)
            if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("proposal scales must be positive");
        if (!(box.lambda_max > 0.0) || !(box.theta_max > 0.0) || !(box.gamma_min >= kGammaMin && box.gamma_min < 1.0))
            throw ValidationError("invalid parameter box");
    }
};

struct Prediction {
    std::string decision_point;
    ChoiceDistribution predicted;
    ChoiceDistribution empirical;
    double kl = 0.0;
};

struct FitScores {
    double kl = 0.0;      ///< count-weighted mean over decision points
    double log_kl = 0.0;
    double train_log_likelihood = 0.0;
    std::optional<double> held_out_log_likelihood;
};

struct FitResult {
    ModelKind kind = ModelKind::noisy_rational;
    std::vector<std::vector<double>> samples;
    std::vector<double> posterior_mean;
    std::vector<double> acceptance_rates;
    std::vector<Prediction> predictions;
    FitScores scores;

    HumanModel mean_model() const { return make_model(kind, posterior_mean); }
};

/// Empirical and predicted choice distributions per decision point, in order
/// of first appearance, plus the count-weighted mean KL. The prediction is the
/// average of the models' choice distributions (the posterior predictive when
/// the models are posterior draws).
inline std::pair<std::vector<Prediction>, double> predict(std::span<const HumanModel> models,
                                                          const ChoiceDataset& data) {
    if (models.empty()) throw ValidationError("prediction needs at least one model");
    std::vector<Prediction> out;
    std::vector<double> weights;
    std::map<std::string, std::size_t> slot;
    for (const auto& r : data.records) {
        auto [it, inserted] = slot.try_emplace(r.decision_point, out.size());
        if (inserted) {
            Prediction p;
            p.decision_point = r.decision_point;
            p.predicted = {r.actions, std::vector<double>(r.actions.size(), 0.0)};
            for (const auto& m : models) {
                const auto probs = choice_probabilities(std::span<const Prospect>(r.prospects), m);
                for (std::size_t i = 0; i < probs.size(); ++i) p.predicted.probabilities[i] += probs[i];
            }
            for (double& x : p.predicted.probabilities) x /= static_cast<double>(models.size());
            p.empirical = {r.actions, std::vector<double>(r.actions.size(), 0.0)};
            out.push_back(std::move(p));
            weights.push_back(0.0);
        }
        Prediction& p = out[it->second];
        if (p.empirical.actions != r.actions)
            throw ValidationError("decision point '" + r.decision_point + "' has inconsistent action sets");
        p.empirical.probabilities[r.chosen] += r.count;
        weights[it->second] += r.count;
    }
    double kl = 0.0, total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (weights[i] > 0.0)
            for (double& x : out[i].empirical.probabilities) x /= weights[i];
        out[i].kl = kl_divergence(out[i].empirical, out[i].predicted);
        kl += weights[i] * out[i].kl;
        total += weights[i];
    }
    return {std::move(out), total > 0.0 ? kl / total : 0.0};
}

inline std::pair<std::vector<Prediction>, double> predict(const HumanModel& model, const ChoiceDataset& data) {
    return predict(std::span<const HumanModel>(&model, 1), data);
}

/// Recomputes predictions and scores of a fit: KL against the posterior
/// predictive, log-likelihood at the posterior mean.
inline void score_fit(FitResult& fit, const ChoiceDataset& train) {
    std::vector<HumanModel> draws;
    draws.reserve(fit.samples.size());
    for (const auto& s : fit.samples) draws.push_back(make_model(fit.kind, s));
    auto [predictions, kl] = predict(draws, train);
    fit.predictions = std::move(predictions);
    fit.scores.kl = kl;
    fit.scores.log_kl = log_kl(kl);
    fit.scores.train_log_likelihood = log_likelihood(fit.mean_model(), train);
}

namespace detail {

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(sigmoid(z) * (1 - sigmoid(z))), stable for large |z|.
inline double log_sigmoid_derivative(double z) {
    const double a = std::abs(z);
    return -a - 2.0 * std::log1p(std::exp(-a));
}

struct BoxTransform {
    std::vector<std::pair<double, double>> bounds;

    std::vector<double> to_box(std::span<const double> z) const {
        std::vector<double> x(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            const auto [lo, hi] = bounds[i];
            x[i] = std::clamp(lo + (hi - lo) * sigmoid(z[i]), lo, hi);
        }
        return x;
    }

    // log |dx/dz|, which turns a uniform prior on the box into a density on z.
    double log_jacobian(std::span<const double> z) const {
        double j = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            j += std::log(bounds[i].second - bounds[i].first) + log_sigmoid_derivative(z[i]);
        return j;
    }
};

struct ChainResult {
    std::vector<std::vector<double>> samples;
    double acceptance = 0.0;
};

inline double safe_log_likelihood(ModelKind kind, std::span<const double> x, const ChoiceDataset& data) {
    try {
        const double ll = log_likelihood(make_model(kind, x), data);
        return std::isnan(ll) ? -std::numeric_limits<double>::infinity() : ll;
    } catch (const ValidationError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

inline ChainResult run_chain(ModelKind kind, const ChoiceDataset& data, const McmcConfig& config,
                             std::size_t chain) {
    const std::uint64_t seed = *config.seed;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain), 0x5eedU};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const BoxTransform tf{config.box.bounds(kind)};
    const std::size_t dims = tf.bounds.size();

    std::vector<double> z(dims);
    for (auto& zi : z) {
        double u = unit(rng);
        u = std::clamp(u, 1e-6, 1.0 - 1e-6);
        zi = std::log(u / (1.0 - u));
    }
    auto log_post = [&](std::span<const double> zz) {
        const auto x = tf.to_box(zz);
        return safe_log_likelihood(kind, x, data) + tf.log_jacobian(zz);
    };
    double current = log_post(z);

    ChainResult out;
    const long total = static_cast<long>(config.burn_in) +
                       static_cast<long>(config.samples_per_chain) * static_cast<long>(config.thinning);
    long accepted = 0;
    std::vector<double> proposal(dims);
    for (long t = 1; t <= total; ++t) {
        for (std::size_t i = 0; i < dims; ++i) proposal[i] = z[i] + config.scale(i) * normal(rng);
        const double candidate = log_post(proposal);
        const double u = unit(rng);
        if (std::isfinite(candidate) && (!std::isfinite(current) || std::log(u) < candidate - current)) {
            z = proposal;
            current = candidate;
            ++accepted;
        }
        if (t > config.burn_in && (t - config.burn_in) % config.thinning == 0) out.samples.push_back(tf.to_box(z));
    }
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(total);
    return out;
}

}  // namespace detail

/// Random-walk Metropolis-Hastings under a uniform prior on the parameter box.
///
/// Each chain starts at a uniform draw in the box and proposes Gaussian steps
/// in logit coordinates. After burn-in, every `thinning`-th state is kept, so
/// the default configuration yields one draw per chain. Chains use their own
/// generator seeded from (seed, chain index) and may run on several threads
/// without changing the result.
inline FitResult metropolis_hastings(ModelKind kind, const ChoiceDataset& data, const McmcConfig& config) {
    config.validate(kind);
    if (data.empty()) throw ValidationError("cannot fit an empty dataset");

    const auto chains = static_cast<std::size_t>(config.chains);
    std::vector<detail::ChainResult> results(chains);
    unsigned workers = config.threads ? config.threads : std::max(1U, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, chains));
    if (workers <= 1) {
        for (std::size_t c = 0; c < chains; ++c) results[c] = detail::run_chain(kind, data, config, c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t c = next++; c < chains; c = next++)
                    results[c] = detail::run_chain(kind, data, config, c);
            });
    }

    FitResult fit;
    fit.kind = kind;
    for (std::size_t c = 0; c < chains; ++c) {
        if (results[c].acceptance == 0.0) {
            std::ostringstream msg;
            msg << "MCMC chain " << c << " rejected every proposal; reduce the proposal scales";
            throw NumericalError(msg.str());
        }
        fit.acceptance_rates.push_back(results[c].acceptance);
        for (auto& s : results[c].samples) fit.samples.push_back(std::move(s));
    }
    const std::size_t dims = fit.samples.front().size();
    fit.posterior_mean.assign(dims, 0.0);
    for (const auto& s : fit.samples)
        for (std::size_t i = 0; i < dims; ++i) fit.posterior_mean[i] += s[i];
    for (double& m : fit.posterior_mean) m /= static_cast<double>(fit.samples.size());

    score_fit(fit, data);
    return fit;
}

/// Log-likelihood of a held-out dataset at the fit's posterior-mean parameters.
inline double held_out_log_likelihood(const FitResult& fit, const ChoiceDataset& test) {
    if (test.empty()) throw ValidationError("held-out dataset is empty");
    return log_likelihood(fit.mean_model(), test);
}

}  // namespace riskaware
