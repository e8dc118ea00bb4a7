#pragma once

#include "evc/inference.hpp"
#include "evc/policy_opt.hpp"

namespace evc {

/// One complete trajectory with its probability under a given policy.
struct TrajectoryAtom {
    std::vector<int> states;
    std::vector<int> actions;
    double prob = 0.0;
};

class EnumerationLimitError : public std::runtime_error {
  public:
    EnumerationLimitError(long long count, long long ceiling)
        : std::runtime_error("trajectory enumeration exceeded the ceiling: " + std::to_string(count) +
                             " > " + std::to_string(ceiling)),
          count(count) {}
    long long count;
};

inline constexpr long long kDefaultEnumerationCeiling = 10'000'000;

/// Every nonzero-probability trajectory exactly once, in lexicographic
/// (s_0, a_0, s_1, ...) order. Probabilities multiply the initial
/// distribution, policy rows and transition entries.
std::vector<TrajectoryAtom> enumerate_trajectories(const TabularMdp& mdp, const PolicyTable& policy,
                                                   long long ceiling = kDefaultEnumerationCeiling);

/// Exact p(evidence | s_t = s, a_t = a) under the uniform reference policy,
/// summed over all trajectory suffixes in plain probability arithmetic. This
/// is the reference side for the backward message tables.
double exact_query_prob(const TabularMdp& mdp, const QueryType& query, int t, int s, int a,
                        long long ceiling = kDefaultEnumerationCeiling);

/// Exact E_q[log p(evidence | trajectory) + alpha * H(trajectory)] by full
/// enumeration; -inf is a legal value (the policy puts mass on trajectories
/// with zero evidence probability).
double exact_objective(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query,
                       double entropy_coeff = 1.0, long long ceiling = kDefaultEnumerationCeiling);

/// Exact gradient of exact_objective with respect to every logit.
LogitGrad exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                const QueryType& query, long long ceiling = kDefaultEnumerationCeiling);

/// Exactly enumerated expectation of the reinforce_gradient estimator under
/// the policy induced by params; must agree with exact_policy_gradient.
LogitGrad expected_reinforce_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                      const QueryType& query, double gamma = 1.0,
                                      long long ceiling = kDefaultEnumerationCeiling);

/// D_KL(q(tau) || p(tau | evidence)) by enumeration; +inf when the policy
/// puts mass outside the posterior's support.
double kl_to_posterior(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query,
                       long long ceiling = kDefaultEnumerationCeiling);

/// Central finite differences of exact_objective with respect to every logit.
LogitGrad finite_difference_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                     const QueryType& query, double step = 1e-5,
                                     long long ceiling = kDefaultEnumerationCeiling);

/// Reference side of the discount consistency check: the expectation, over
/// the (1 - gamma) absorbing-branch outcomes of apply_discount_transform, of
/// the undiscounted empirical-Q recursion along the given trajectory. ALL
/// enumerates absorption times flat (the recursion is linear); ANY takes the
/// branch expectation of each one-step update, with the absorbed branch
/// evaluated by the undiscounted recursion on an explicit absorbing suffix.
VectorXd discounted_q_branch_expectation(const TabularMdp& mdp, const std::vector<int>& states,
                                         const std::vector<int>& actions, double gamma,
                                         const QueryType& query);

}  // namespace evc
