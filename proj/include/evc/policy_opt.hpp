#pragma once

#include "evc/inference.hpp"

#include <cstdint>
#include <string>

namespace evc {

using LogitGrad = std::vector<MatrixXd>;

/// Trainable softmax policy. Time-varying mode keeps one logit slice per
/// step (finite-horizon optima are nonstationary); the shared mode keeps a
/// single slice reused at every step.
struct SoftmaxPolicyParams {
    std::vector<MatrixXd> logits;  // [t](s, a), or one shared slice
    bool time_varying = true;
    double entropy_coeff = 1.0;

    static SoftmaxPolicyParams zeros(const TabularMdp& mdp, bool time_varying = true,
                                     double entropy_coeff = 1.0);

    const MatrixXd& slice(int t) const { return logits[time_varying ? t : 0]; }
    MatrixXd& slice(int t) { return logits[time_varying ? t : 0]; }
    int slices() const { return int(logits.size()); }

    VectorXd action_probs(int t, int s) const;
    double log_prob(int t, int s, int a) const;
};

PolicyTable policy_table(const SoftmaxPolicyParams& params, int horizon);
LogitGrad zero_grad_like(const SoftmaxPolicyParams& params);

/// Sampled (s, a) sequences plus the per-step annotations the gradient
/// estimator consumes: empirical Q values and cumulative event probabilities.
struct TrajectoryBatch {
    MatrixXi states;       // n x T
    MatrixXi actions;      // n x T
    MatrixXd empirical_q;  // n x T, filled by annotate_batch
    MatrixXd cum_event;    // n x T, c_t per step
    std::uint64_t seed = 0;
    QueryType query;
    double gamma = 1.0;
    bool annotated = false;

    int size() const { return int(states.rows()); }
    int horizon() const { return int(states.cols()); }
};

/// Deterministic given (mdp, params, n, seed); trajectory i uses the
/// substream derived from (seed, i), so results are identical for any jobs.
TrajectoryBatch sample_trajectories(const TabularMdp& mdp, const SoftmaxPolicyParams& params, int n,
                                    std::uint64_t seed, int jobs = 1);

/// Empirical Q recursions over one trajectory. The matrix-based overloads
/// accept an arbitrary table so learned event models can drive them.
/// ALL:  Qhat_t = log_event(s_t, a_t) + gamma * Qhat_{t+1}
/// ANY:  Qhat_t = gamma * log(p + (1-p) e^{Qhat_{t+1}}) + (1-gamma) * log p
/// AT:   Qhat_t = log p1(s_{t*}, a_{t*}) for t <= t*, else 0 (undiscounted).
VectorXd empirical_q_all(const std::vector<int>& states, const std::vector<int>& actions,
                         const MatrixXd& log_event, double gamma);
VectorXd empirical_q_any(const std::vector<int>& states, const std::vector<int>& actions,
                         const MatrixXd& event_prob, double gamma);
VectorXd empirical_q_all(const std::vector<int>& states, const std::vector<int>& actions,
                         const TabularMdp& mdp, double gamma);
VectorXd empirical_q_any(const std::vector<int>& states, const std::vector<int>& actions,
                         const TabularMdp& mdp, double gamma);
VectorXd empirical_q_at(const std::vector<int>& states, const std::vector<int>& actions,
                        const TabularMdp& mdp, int t_star);

/// Fills empirical_q and cum_event from the MDP's own event table.
void annotate_batch(TrajectoryBatch& batch, const TabularMdp& mdp, const QueryType& query, double gamma);
/// Same, but with a learned event-probability table in place of the MDP's.
void annotate_batch(TrajectoryBatch& batch, const MatrixXd& event_prob, const MatrixXd& log_event,
                    const QueryType& query, double gamma);

struct ReinforceResult {
    LogitGrad grad;
    std::vector<int> rejected;  // batch rows with zero-probability evidence
};

/// Score-function estimator of the query objective's gradient. ALL/AT use
/// the future-return replacement Qhat(t:T); for ANY each step's multiplier is
/// log(c_{t-1} + (1 - c_{t-1}) exp Qhat(t:T)), the future return weighted by
/// the probability the event has not yet occurred (zero once c = 1).
/// Trajectories whose total evidence probability is zero are rejected and
/// reported. The optional per-timestep mean-return baseline is off by
/// default.
ReinforceResult reinforce_gradient(const TrajectoryBatch& batch, const SoftmaxPolicyParams& params,
                                   const QueryType& query, bool use_baseline = false);

/// Shared per-trajectory accumulation used by both the sampled estimator and
/// its exactly enumerated expectation.
void accumulate_estimator_terms(LogitGrad& grad, const std::vector<int>& states,
                                const std::vector<int>& actions, const VectorXd& empirical_q,
                                const VectorXd& cum_event, const SoftmaxPolicyParams& params,
                                const QueryType& query, double weight,
                                const VectorXd* baseline = nullptr);

struct TrainConfig {
    int iters = 100;
    int batch_size = 500;
    double step_size = 0.25;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    double entropy_coeff = 1.0;
    bool time_varying = true;
    int jobs = 1;
    QueryType query;  // set by train_policy
    // exact objective is logged when the trajectory count stays under this
    long long exact_log_ceiling = 200'000;
};

struct TrainIterRow {
    int iter;
    double objective_exact;  // NaN when enumeration is infeasible
    double objective_mc;
    double grad_norm;
    double entropy;
};

struct TrainingLog {
    std::vector<TrainIterRow> rows;
    std::string to_csv() const;
};

struct TrainResult {
    SoftmaxPolicyParams params;
    TrainingLog log;
};

/// REINFORCE-style gradient ascent. Deterministic given the seed; aborts
/// with the iteration index if the objective turns NaN.
TrainResult train_policy(const TabularMdp& mdp, const QueryType& query, const TrainConfig& config);

/// Exact state occupancies rho_t(s) under a policy (forward pass).
std::vector<VectorXd> state_occupancies(const TabularMdp& mdp, const PolicyTable& policy);

/// Occupancy-weighted marginal pi(a | s); uniform for unvisited states.
MatrixXd marginal_policy(const TabularMdp& mdp, const PolicyTable& policy);

/// Exact p(evidence) under a policy, by forward dynamic programming (no
/// enumeration): ALL multiplies per-step event factors, ANY tracks the
/// no-event-yet mass, AT takes the event expectation at t*.
double policy_success_probability(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query);

/// Greedy (argmax) rollout from the most likely initial state.
std::vector<int> greedy_rollout(const TabularMdp& mdp, const SoftmaxPolicyParams& params);

}  // namespace evc
