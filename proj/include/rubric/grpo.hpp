#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rubric/util.hpp"

namespace rubric {

struct RolloutRecord {
    std::string caption;
    double policy_log_prob = 0.0;
    double reference_log_prob = 0.0;
};

struct RolloutGroup {
    std::string image_ref;
    std::vector<RolloutRecord> rollouts;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

struct GrpoConfig {
    int group_size = 4;
    double clip_epsilon = 0.2;
    double std_floor = 1e-6;
    double learning_rate = 1e-5;
    double warmup_ratio = 0.01;
    int max_completion_tokens = 1024;
    int steps = 0;
};

// A_i = (G_i - mean) / population std; all zeros when std < std_floor.
std::vector<double> group_advantages(const std::vector<double>& rewards,
                                     double std_floor);

// min(rho*A, clip(rho, 1-eps, 1+eps)*A) with rho = exp(lp_policy - lp_ref).
double grpo_surrogate(double log_prob_policy, double log_prob_reference,
                      double advantage, double clip_epsilon);

// -(1/N) sum_i surrogate_i; requires populated advantages.
double grpo_loss(const RolloutGroup& group, double clip_epsilon);

// Abstract student policy: whole captions are actions.
class Policy {
public:
    virtual ~Policy() = default;
    virtual std::vector<std::string> sample(const std::string& image_ref, int count) = 0;
    virtual double log_prob(const std::string& image_ref, const std::string& caption) = 0;
    virtual std::vector<double> parameters() const = 0;
    // Applies an already-scaled update: theta -= update.
    virtual void apply_gradient(const std::vector<double>& update) = 0;
    // Immutable reference policy; its log_probs never change afterwards.
    virtual std::shared_ptr<Policy> snapshot() const = 0;
};

// Categorical distribution over a fixed candidate caption set via softmax of
// one parameter per candidate. Desk-scale stand-in for the student VLM.
class ToyPolicy : public Policy {
public:
    ToyPolicy(std::vector<std::string> candidates, std::vector<double> parameters,
              std::uint64_t seed = 0);

    std::vector<std::string> sample(const std::string& image_ref, int count) override;
    double log_prob(const std::string& image_ref, const std::string& caption) override;
    std::vector<double> parameters() const override { return params_; }
    void apply_gradient(const std::vector<double>& update) override;
    std::shared_ptr<Policy> snapshot() const override;

    std::vector<double> probabilities() const;
    const std::vector<std::string>& candidates() const { return candidates_; }
    int candidate_index(const std::string& caption) const;

private:
    std::vector<std::string> candidates_;
    std::vector<double> params_;
    SeededRng rng_;
};

using RewardFn = std::function<double(const std::string& caption)>;

struct StepReport {
    double loss = 0.0;
    std::vector<double> rewards;
    std::vector<double> advantages;
    double gradient_norm = 0.0;
    double learning_rate = 0.0;
    RolloutGroup group;
};

// One GRPO update: snapshot reference -> sample N rollouts -> rewards ->
// advantages -> loss -> analytic gradient -> apply. Toy-policy only for the
// gradient step; the math helpers above are policy-agnostic.
StepReport grpo_step(ToyPolicy& policy, const RewardFn& reward_fn,
                     const std::string& image_ref, const GrpoConfig& config,
                     double learning_rate);

// Analytic gradient of grpo_loss w.r.t. toy-policy softmax parameters, for a
// fixed sampled group. Shared by grpo_step and the finite-difference check.
std::vector<double> grpo_loss_gradient(const ToyPolicy& policy,
                                       const RolloutGroup& group,
                                       double clip_epsilon);
double grpo_loss_at(const std::vector<double>& params, const ToyPolicy& policy,
                    const RolloutGroup& group, double clip_epsilon);

// Cosine learning-rate schedule with linear warmup.
double scheduled_learning_rate(const GrpoConfig& config, int step);

struct TrainScenario {
    std::vector<std::string> candidates;
    std::vector<double> initial_parameters;  // empty -> zeros
    RewardFn reward_fn;
    RewardFn shadow_reward_fn;  // optional diagnostic score, not optimized
    std::string image_ref = "scenario";
    std::uint64_t seed = 0;
};

struct TraceStep {
    int step = 0;
    double loss = 0.0;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    std::vector<double> advantages;
    double gradient_norm = 0.0;
    double learning_rate = 0.0;
    double expected_reward = 0.0;         // sum_c p(c) * r(c), exact for toy policy
    double expected_shadow_reward = 0.0;  // 0 when no shadow fn
    nlohmann::json to_json() const;
};

struct TrainTrace {
    std::vector<TraceStep> steps;
    std::vector<double> final_probabilities;
    std::vector<std::string> candidates;
};

TrainTrace train_sim(const GrpoConfig& config, const TrainScenario& scenario);

}  // namespace rubric
