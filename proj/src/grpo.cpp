#include "rubric/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "rubric/errors.hpp"

namespace rubric {

std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double std_floor) {
    const std::size_t n = rewards.size();
    if (n < 2) throw GroupTooSmall("group statistics need at least 2 rewards");
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                        static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(n);  // population variance
    const double std = std::sqrt(var);
    std::vector<double> advantages(n, 0.0);
    if (std < std_floor) return advantages;  // degenerate group, no gradient
    for (std::size_t i = 0; i < n; ++i) advantages[i] = (rewards[i] - mean) / std;
    return advantages;
}

double grpo_surrogate(double log_prob_policy, double log_prob_reference,
                      double advantage, double clip_epsilon) {
    if (!std::isfinite(log_prob_policy) || !std::isfinite(log_prob_reference)) {
        throw NonFiniteRatio("log-probabilities must be finite");
    }
    const double ratio = std::exp(log_prob_policy - log_prob_reference);
    if (!std::isfinite(ratio)) {
        throw NonFiniteRatio("importance ratio overflowed; policy has diverged");
    }
    const double clipped =
        std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

double grpo_loss(const RolloutGroup& group, double clip_epsilon) {
    const std::size_t n = group.rollouts.size();
    if (n == 0 || group.advantages.size() != n) {
        throw SchemaViolation("grpo_loss requires populated advantages");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += grpo_surrogate(group.rollouts[i].policy_log_prob,
                              group.rollouts[i].reference_log_prob,
                              group.advantages[i], clip_epsilon);
    }
    return -sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// ToyPolicy

ToyPolicy::ToyPolicy(std::vector<std::string> candidates, std::vector<double> parameters,
                     std::uint64_t seed)
    : candidates_(std::move(candidates)), params_(std::move(parameters)), rng_(seed) {
    if (candidates_.size() < 2) {
        throw SchemaViolation("toy policy needs at least 2 candidate captions");
    }
    if (params_.size() != candidates_.size()) {
        throw SchemaViolation("parameter count must match candidate count");
    }
}

std::vector<double> ToyPolicy::probabilities() const {
    const double max_param = *std::max_element(params_.begin(), params_.end());
    std::vector<double> probs(params_.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        probs[i] = std::exp(params_[i] - max_param);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

int ToyPolicy::candidate_index(const std::string& caption) const {
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        if (candidates_[i] == caption) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::string> ToyPolicy::sample(const std::string&, int count) {
    const auto probs = probabilities();
    std::vector<std::string> out;
    out.reserve(count);
    for (int k = 0; k < count; ++k) {
        const double u = rng_.uniform();
        double acc = 0.0;
        std::size_t pick = probs.size() - 1;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        out.push_back(candidates_[pick]);
    }
    return out;
}

double ToyPolicy::log_prob(const std::string&, const std::string& caption) {
    const int idx = candidate_index(caption);
    if (idx < 0) throw UnknownCaption("caption is not in the candidate set: " + caption);
    const auto probs = probabilities();
    return std::log(probs[idx]);
}

void ToyPolicy::apply_gradient(const std::vector<double>& update) {
    if (update.size() != params_.size()) {
        throw SchemaViolation("gradient size mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= update[i];
}

std::shared_ptr<Policy> ToyPolicy::snapshot() const {
    return std::make_shared<ToyPolicy>(candidates_, params_, 0);
}

// ---------------------------------------------------------------------------
// Loss gradient through the softmax parameters

namespace {

std::vector<double> softmax(const std::vector<double>& params) {
    const double max_param = *std::max_element(params.begin(), params.end());
    std::vector<double> probs(params.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        probs[i] = std::exp(params[i] - max_param);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

}  // namespace

double grpo_loss_at(const std::vector<double>& params, const ToyPolicy& policy,
                    const RolloutGroup& group, double clip_epsilon) {
    const auto probs = softmax(params);
    double sum = 0.0;
    for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
        const int idx = policy.candidate_index(group.rollouts[i].caption);
        if (idx < 0) throw UnknownCaption("rollout caption not in candidate set");
        sum += grpo_surrogate(std::log(probs[idx]),
                              group.rollouts[i].reference_log_prob,
                              group.advantages[i], clip_epsilon);
    }
    return -sum / static_cast<double>(group.rollouts.size());
}

std::vector<double> grpo_loss_gradient(const ToyPolicy& policy,
                                       const RolloutGroup& group,
                                       double clip_epsilon) {
    const auto probs = policy.probabilities();
    const std::size_t s = probs.size();
    const std::size_t n = group.rollouts.size();
    std::vector<double> grad(s, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rollout = group.rollouts[i];
        const int idx = policy.candidate_index(rollout.caption);
        if (idx < 0) throw UnknownCaption("rollout caption not in candidate set");
        const double ratio =
            std::exp(std::log(probs[idx]) - rollout.reference_log_prob);
        const double advantage = group.advantages[i];
        const double clipped =
            std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
        // d/d_rho of min(rho*A, clip(rho)*A): A when the unclipped branch is
        // active (ties included), 0 when the constant clipped branch wins.
        if (ratio * advantage > clipped * advantage) continue;
        // d rho / d theta_j = rho * (1[j == idx] - p_j)
        const double scale = advantage * ratio / static_cast<double>(n);
        for (std::size_t j = 0; j < s; ++j) {
            const double indicator = (static_cast<int>(j) == idx) ? 1.0 : 0.0;
            grad[j] -= scale * (indicator - probs[j]);
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Training loop

double scheduled_learning_rate(const GrpoConfig& config, int step) {
    if (config.steps <= 0) return config.learning_rate;
    const double warmup_steps =
        std::max(1.0, config.warmup_ratio * static_cast<double>(config.steps));
    if (static_cast<double>(step) < warmup_steps) {
        return config.learning_rate * (static_cast<double>(step) + 1.0) / warmup_steps;
    }
    const double progress = (static_cast<double>(step) - warmup_steps) /
                            std::max(1.0, static_cast<double>(config.steps) - warmup_steps);
    return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

StepReport grpo_step(ToyPolicy& policy, const RewardFn& reward_fn,
                     const std::string& image_ref, const GrpoConfig& config,
                     double learning_rate) {
    if (config.group_size < 2) {
        throw GroupTooSmall("group_size must be >= 2");
    }
    auto reference = policy.snapshot();

    StepReport report;
    report.learning_rate = learning_rate;
    RolloutGroup& group = report.group;
    group.image_ref = image_ref;

    const auto captions = policy.sample(image_ref, config.group_size);
    for (const auto& caption : captions) {
        RolloutRecord rollout;
        rollout.caption = caption;
        rollout.policy_log_prob = policy.log_prob(image_ref, caption);
        rollout.reference_log_prob = reference->log_prob(image_ref, caption);
        group.rollouts.push_back(std::move(rollout));
        group.rewards.push_back(reward_fn(caption));
    }
    group.advantages = group_advantages(group.rewards, config.std_floor);
    report.rewards = group.rewards;
    report.advantages = group.advantages;
    report.loss = grpo_loss(group, config.clip_epsilon);

    const auto gradient = grpo_loss_gradient(policy, group, config.clip_epsilon);
    double norm_sq = 0.0;
    std::vector<double> update(gradient.size());
    for (std::size_t j = 0; j < gradient.size(); ++j) {
        norm_sq += gradient[j] * gradient[j];
        update[j] = learning_rate * gradient[j];
    }
    report.gradient_norm = std::sqrt(norm_sq);
    policy.apply_gradient(update);
    return report;
}

nlohmann::json TraceStep::to_json() const {
    return {
        {"step", step},
        {"loss", loss},
        {"reward_mean", reward_mean},
        {"reward_std", reward_std},
        {"advantages", advantages},
        {"gradient_norm", gradient_norm},
        {"learning_rate", learning_rate},
        {"expected_reward", expected_reward},
        {"expected_shadow_reward", expected_shadow_reward},
    };
}

TrainTrace train_sim(const GrpoConfig& config, const TrainScenario& scenario) {
    std::vector<double> params = scenario.initial_parameters;
    if (params.empty()) params.assign(scenario.candidates.size(), 0.0);
    ToyPolicy policy(scenario.candidates, params, scenario.seed);

    // Candidate rewards are fixed within a run; evaluate each caption once.
    std::vector<double> candidate_rewards(scenario.candidates.size());
    std::vector<double> candidate_shadow(scenario.candidates.size(), 0.0);
    for (std::size_t c = 0; c < scenario.candidates.size(); ++c) {
        candidate_rewards[c] = scenario.reward_fn(scenario.candidates[c]);
        if (scenario.shadow_reward_fn) {
            candidate_shadow[c] = scenario.shadow_reward_fn(scenario.candidates[c]);
        }
    }
    const RewardFn cached_reward = [&](const std::string& caption) {
        return candidate_rewards[policy.candidate_index(caption)];
    };

    TrainTrace trace;
    trace.candidates = scenario.candidates;
    for (int step = 0; step < config.steps; ++step) {
        const double lr = scheduled_learning_rate(config, step);
        StepReport report = grpo_step(policy, cached_reward, scenario.image_ref,
                                      config, lr);
        TraceStep ts;
        ts.step = step;
        ts.loss = report.loss;
        const auto& rewards = report.rewards;
        ts.reward_mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                         static_cast<double>(rewards.size());
        double var = 0.0;
        for (double r : rewards) var += (r - ts.reward_mean) * (r - ts.reward_mean);
        ts.reward_std = std::sqrt(var / static_cast<double>(rewards.size()));
        ts.advantages = report.advantages;
        ts.gradient_norm = report.gradient_norm;
        ts.learning_rate = lr;
        const auto probs = policy.probabilities();
        for (std::size_t c = 0; c < probs.size(); ++c) {
            ts.expected_reward += probs[c] * candidate_rewards[c];
            ts.expected_shadow_reward += probs[c] * candidate_shadow[c];
        }
        trace.steps.push_back(std::move(ts));
    }
    trace.final_probabilities = policy.probabilities();
    return trace;
}

}  // namespace rubric
