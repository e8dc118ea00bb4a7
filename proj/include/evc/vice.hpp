#pragma once

#include "evc/policy_opt.hpp"

#include <optional>

namespace evc {

/// Success examples (s, a); action -1 marks state-only supervision.
/// query_origin records which query's data distribution produced them.
struct SuccessDataset {
    std::vector<std::pair<int, int>> examples;
    QueryType query_origin;
};

/// File format: a JSON list of {s:int, a:int|null}.
std::string serialize_dataset(const SuccessDataset& dataset);
SuccessDataset parse_dataset(const std::string& text, const QueryType& query_origin);

/// Learnable event probabilities. The sigmoid keeps p(e=1|s,a) a valid
/// probability for use inside the ANY backup; the unnormalized discriminator
/// numerator is recovered as f = log p + offset.
struct EventModel {
    MatrixXd logits;  // (s, a); in state-only mode every row is constant
    double offset = 0.0;
    bool state_only = false;

    static EventModel zeros(int num_states, int num_actions, bool state_only = false);

    double prob(int s, int a) const { return 1.0 / (1.0 + std::exp(-logits(s, a))); }
    double f(int s, int a) const { return std::log(prob(s, a)) + offset; }
    MatrixXd prob_table() const;
    MatrixXd f_table() const;
};

/// Discriminator D(s,a) = exp f / (exp f + pi(a|s)) against the current
/// policy's occupancy-weighted action marginal.
struct DiscriminatorState {
    EventModel model;
    MatrixXd policy_sa;  // pi(a | s), row-stochastic
};

/// Requires pi(a|s) > 0. Computed as sigmoid(f - log pi) so the induced
/// reward log D - log(1 - D) = f - log pi holds exactly.
double discriminator_output(const DiscriminatorState& state, int s, int a);

/// One step of gradient descent on the class-balanced binary cross-entropy
/// (positives labeled 1, policy samples 0); updates logits and offset.
EventModel discriminator_update(const DiscriminatorState& state, const SuccessDataset& positives,
                                const TrajectoryBatch& negatives, double step_size);

/// Samples success examples from the true-query posterior policy by
/// rejection: per-step Bernoulli event draws, keeping trajectories where the
/// conditioning evidence holds. ANY records the first occurrence, ALL one
/// uniformly drawn step of an all-events trajectory, AT the pair at t*.
SuccessDataset collect_success_examples(const TabularMdp& mdp, const QueryType& query, int n,
                                        std::uint64_t seed, long long max_attempts = 1'000'000);

struct ViceConfig {
    int iters = 200;
    int batch_size = 300;
    int disc_steps = 10;
    double policy_step = 0.25;
    double disc_step = 0.5;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    double entropy_coeff = 0.01;
    bool state_only = false;
    int jobs = 1;
    /// When set, task_metric logs the policy's exact success probability
    /// under this MDP's true event table.
    std::optional<TabularMdp> eval_mdp;
};

struct ViceIterRow {
    int iter;
    double disc_loss;
    double disc_acc;
    double task_metric;  // NaN without eval_mdp
    double mean_reward;
};

struct ViceLog {
    std::vector<ViceIterRow> rows;
    bool improved = false;
    std::string to_csv() const;
};

struct ViceResult {
    EventModel model;
    SoftmaxPolicyParams params;
    ViceLog log;
};

/// Alternates discriminator training against current-policy samples with a
/// query-specific policy-gradient step on the learned event model (ALL feeds
/// f into the ALL recursion, ANY feeds p into the ANY recursion). The input
/// MDP's own event table is ignored. Deterministic given the seed.
ViceResult vice_train(const TabularMdp& mdp_dynamics, const SuccessDataset& dataset, const QueryType& query,
                      const ViceConfig& config);

/// Offline baseline: one-shot balanced logistic fit of success examples
/// against uniform-random-policy samples, with no policy in the loop.
EventModel naive_classifier_baseline(const SuccessDataset& dataset, const TabularMdp& mdp, int n_negatives,
                                     std::uint64_t seed, int fit_steps = 4000, double fit_step_size = 0.5);

}  // namespace evc
