#pragma once

#include "evc/mdp.hpp"

#include <utility>

namespace evc {

/// Backward log-messages for one query under the uniform reference policy.
/// q[t](s,a) = log p(evidence from step t on | s_t = s, a_t = a) and
/// v[t](s) = log sum_a (1/|A|) exp(q[t](s,a)), so exp of either is a literal
/// probability; all entries are <= 0 and -inf marks unreachable evidence.
struct MessageTable {
    QueryType query;
    int horizon = 0;
    std::vector<MatrixXd> q;  // [t](s, a)
    std::vector<VectorXd> v;  // [t](s)
};

/// Time-indexed action distributions pi[t](s, a); rows sum to one.
struct PolicyTable {
    std::vector<MatrixXd> pi;

    int horizon() const { return int(pi.size()); }
    int num_states() const { return pi.empty() ? 0 : int(pi[0].rows()); }
    int num_actions() const { return pi.empty() ? 0 : int(pi[0].cols()); }
};

PolicyTable uniform_policy(const TabularMdp& mdp);

/// ALL query: evidence e_t = 1 at every remaining step.
/// q[t](s,a) = log p1(s,a) + log E_{s'}[exp v[t+1](s')].
MessageTable backward_all(const TabularMdp& mdp);

/// ANY query: evidence t* in [t, T-1] (the event happens at least once).
/// q[t](s,a) = log(p1 + (1 - p1) E_{s'}[exp v[t+1](s')]).
MessageTable backward_any(const TabularMdp& mdp);

/// AT query: evidence e_{t*} = 1 at one step only; the event factor enters
/// at t_star and messages after t_star are identically 0 in log space.
MessageTable backward_at(const TabularMdp& mdp, int t_star);

/// Posterior policy pi[t](s,a) = (1/|A|) exp(q - v); rows with v = -inf
/// (unreachable evidence) fall back to uniform.
PolicyTable policy_from_messages(const MessageTable& msgs);

/// Forward message c_t = p(t* in [0, t] | s_{0:t}, a_{0:t}) along a prefix.
struct ForwardTrace {
    std::vector<std::pair<int, int>> prefix;  // (s, a) per step
    std::vector<double> cum_event_prob;       // c_t, one per prefix step
};

ForwardTrace forward_any(const TabularMdp& mdp, const std::vector<std::pair<int, int>>& prefix);

/// Non-seeking ANY policy at step t in the given state: combines the forward
/// message c_{t-1} (trace covers steps 0..t-1) with the backward messages.
/// Once c = 1 the distribution is uniform; at c = 0 it equals the seeking
/// posterior row.
VectorXd non_seeking_action_dist(const TabularMdp& mdp, const MessageTable& msgs, const ForwardTrace& trace,
                                 int t, int state);

/// Best-case companion table: the same per-step update as the sum-product
/// messages, but maximizing over actions and over positive-probability next
/// states. exp(q) is the largest evidence probability any single trajectory
/// suffix can attain; with 0/1 event tables this is exactly reachability.
MessageTable backward_best_case(const TabularMdp& mdp, const QueryType& query);

/// A trajectory maximizing p(evidence | trajectory). For deterministic
/// dynamics and a point-mass start this is the posterior mode (all feasible
/// trajectories share the same prior probability under a uniform reference).
struct BestCaseTrajectory {
    std::vector<int> states;
    std::vector<int> actions;
    double evidence_prob = 0.0;
};

BestCaseTrajectory best_case_trajectory(const TabularMdp& mdp, const QueryType& query);

/// JSON export of a solved query: {query, horizon, Q, V, pi} with -inf
/// encoded as the string "-inf".
std::string serialize_solution(const MessageTable& msgs, const PolicyTable& policy);

}  // namespace evc
