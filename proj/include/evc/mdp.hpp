#pragma once

#include "evc/types.hpp"

#include <string>
#include <vector>

namespace evc {

/// Inference query selecting which event evidence the trajectory is
/// conditioned on. Step indices are 0-based throughout the library:
/// a horizon of T means steps 0..T-1.
struct QueryType {
    enum class Kind { All, At, Any };

    Kind kind = Kind::All;
    int at_step = -1;  // only meaningful for Kind::At

    static QueryType all() { return {Kind::All, -1}; }
    static QueryType any() { return {Kind::Any, -1}; }
    static QueryType at(int step) { return {Kind::At, step}; }

    bool operator==(const QueryType&) const = default;
};

std::string to_string(const QueryType& q);

/// Finite MDP with a per-(state, action) event probability table in place of
/// a reward function: event_prob(s, a) = p(e_t = 1 | s_t = s, a_t = a).
/// Instances are treated as immutable values after construction.
struct TabularMdp {
    int num_states = 0;
    int num_actions = 0;
    int horizon = 0;
    std::vector<MatrixXd> transitions;  // [a](s, s')
    VectorXd initial_dist;              // (s)
    MatrixXd event_prob;                // (s, a)
    std::vector<std::string> state_labels;   // optional, empty if unnamed
    std::vector<std::string> action_labels;  // optional

    Eigen::MatrixXd::ConstRowXpr next_state_dist(int s, int a) const {
        return transitions[a].row(s);
    }

    bool has_deterministic_dynamics() const;
};

/// Checks all structural invariants; returns one message per violation,
/// naming the offending index and quantity. Empty result means valid.
std::vector<std::string> validate(const TabularMdp& mdp);

/// Throws std::invalid_argument listing the violations, if any.
void require_valid(const TabularMdp& mdp);

/// Realizes a discount factor as dynamics: every transition is scaled by
/// gamma and the remaining (1 - gamma) mass is routed to one extra absorbing
/// state. The absorbing state's event probability is 1 for ALL/AT queries
/// (zero reward) and 0 for ANY (the event can never happen there).
TabularMdp apply_discount_transform(const TabularMdp& mdp, double gamma, const QueryType& query);

/// Boundary conversion for reward-specified inputs, p = exp(r). Rewards must
/// be nonpositive so the result is a probability table.
MatrixXd event_probs_from_rewards(const MatrixXd& log_rewards);

/// Options for the seeded instance generator used by verification suites.
struct RandomMdpOptions {
    int max_states = 5;
    int max_actions = 3;
    int max_horizon = 5;
    int max_support = 3;        // next states per (s, a)
    double min_event_prob = 0;  // raise to avoid zero-probability events
    bool deterministic_dynamics = false;
    bool binary_events = false;  // event probabilities drawn from {0, 1}
};

TabularMdp random_mdp(std::uint64_t seed, const RandomMdpOptions& options = {});

}  // namespace evc
