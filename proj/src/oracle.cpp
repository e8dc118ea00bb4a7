#include "evc/oracle.hpp"

#include <functional>
#include <map>

namespace evc {

namespace {

// log p(evidence | trajectory), plain probability arithmetic
double evidence_log_prob(const TabularMdp& mdp, const QueryType& query, const std::vector<int>& states,
                         const std::vector<int>& actions) {
    switch (query.kind) {
        case QueryType::Kind::All: {
            double lp = 0.0;
            for (size_t t = 0; t < states.size(); ++t)
                lp += log_or_neg_inf(mdp.event_prob(states[t], actions[t]));
            return lp;
        }
        case QueryType::Kind::Any: {
            double none = 1.0;
            for (size_t t = 0; t < states.size(); ++t) none *= 1.0 - mdp.event_prob(states[t], actions[t]);
            return log_or_neg_inf(1.0 - none);
        }
        case QueryType::Kind::At:
            return log_or_neg_inf(mdp.event_prob(states[query.at_step], actions[query.at_step]));
    }
    return neg_inf;
}

}  // namespace

std::vector<TrajectoryAtom> enumerate_trajectories(const TabularMdp& mdp, const PolicyTable& policy,
                                                   long long ceiling) {
    require_valid(mdp);
    if (policy.horizon() != mdp.horizon) throw std::invalid_argument("policy horizon mismatch");

    const int T = mdp.horizon;
    std::vector<TrajectoryAtom> atoms;
    std::vector<int> states(T), actions(T);

    std::function<void(int, int, double)> walk = [&](int t, int s, double prob) {
        states[t] = s;
        for (int a = 0; a < mdp.num_actions; ++a) {
            double pa = policy.pi[t](s, a);
            if (pa <= 0.0) continue;
            actions[t] = a;
            double p = prob * pa;
            if (t == T - 1) {
                if (long long(atoms.size()) >= ceiling)
                    throw EnumerationLimitError(long long(atoms.size()) + 1, ceiling);
                atoms.push_back({states, actions, p});
                continue;
            }
            for (int sp = 0; sp < mdp.num_states; ++sp) {
                double ptr = mdp.transitions[a](s, sp);
                if (ptr > 0.0) walk(t + 1, sp, p * ptr);
            }
        }
    };

    for (int s = 0; s < mdp.num_states; ++s)
        if (mdp.initial_dist[s] > 0.0) walk(0, s, mdp.initial_dist[s]);
    return atoms;
}

double exact_query_prob(const TabularMdp& mdp, const QueryType& query, int t, int s, int a,
                        long long ceiling) {
    require_valid(mdp);
    if (t < 0 || t >= mdp.horizon || s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions)
        throw std::invalid_argument("exact_query_prob index out of range");
    if (query.kind == QueryType::Kind::At && (query.at_step < 0 || query.at_step >= mdp.horizon))
        throw std::invalid_argument("t_star out of range");
    if (query.kind == QueryType::Kind::At && t > query.at_step) return 1.0;

    // Suffixes beyond the event window contribute a factor of one.
    const int last = query.kind == QueryType::Kind::At ? query.at_step : mdp.horizon - 1;
    const double unif = 1.0 / mdp.num_actions;
    long long visited = 0;

    double total = 0.0;
    // walk every suffix path, carrying its probability and event bookkeeping:
    // ALL multiplies event factors, ANY multiplies survival factors.
    std::function<void(int, int, int, double, double)> walk = [&](int tt, int ss, int aa, double path_prob,
                                                                  double event_acc) {
        if (++visited > ceiling) throw EnumerationLimitError(visited, ceiling);
        double p1 = mdp.event_prob(ss, aa);
        switch (query.kind) {
            case QueryType::Kind::All: event_acc *= p1; break;
            case QueryType::Kind::Any: event_acc *= 1.0 - p1; break;
            case QueryType::Kind::At:
                if (tt == query.at_step) event_acc *= p1;
                break;
        }
        if (tt == last) {
            double value = query.kind == QueryType::Kind::Any ? 1.0 - event_acc : event_acc;
            total += path_prob * value;
            return;
        }
        for (int sp = 0; sp < mdp.num_states; ++sp) {
            double ptr = mdp.transitions[aa](ss, sp);
            if (ptr <= 0.0) continue;
            for (int ap = 0; ap < mdp.num_actions; ++ap) walk(tt + 1, sp, ap, path_prob * ptr * unif, event_acc);
        }
    };
    walk(t, s, a, 1.0, 1.0);
    return total;
}

double exact_objective(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query,
                       double entropy_coeff, long long ceiling) {
    auto atoms = enumerate_trajectories(mdp, policy, ceiling);
    double j = 0.0;
    bool minus_inf = false;
    for (const auto& atom : atoms) {
        double val = evidence_log_prob(mdp, query, atom.states, atom.actions);
        if (val == neg_inf) {
            minus_inf = true;
            continue;
        }
        double log_pi = 0.0;
        for (int t = 0; t < mdp.horizon; ++t) log_pi += std::log(policy.pi[t](atom.states[t], atom.actions[t]));
        j += atom.prob * (val - entropy_coeff * log_pi);
    }
    return minus_inf ? neg_inf : j;
}

LogitGrad exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                const QueryType& query, long long ceiling) {
    PolicyTable policy = policy_table(params, mdp.horizon);
    auto atoms = enumerate_trajectories(mdp, policy, ceiling);
    const double alpha = params.entropy_coeff;

    LogitGrad grad = zero_grad_like(params);
    for (const auto& atom : atoms) {
        double val = evidence_log_prob(mdp, query, atom.states, atom.actions);
        if (val == neg_inf)
            throw std::domain_error("objective is -inf on the policy's support; gradient undefined");
        double log_pi = 0.0;
        for (int t = 0; t < mdp.horizon; ++t) log_pi += std::log(policy.pi[t](atom.states[t], atom.actions[t]));

        // d/dtheta sum_tau q (val - alpha log q_actions)
        //   = E[ grad log q (val - alpha log q_actions - alpha) ]
        double coef = atom.prob * (val - alpha * log_pi - alpha);
        for (int t = 0; t < mdp.horizon; ++t) {
            int s = atom.states[t], a = atom.actions[t];
            MatrixXd& g = grad[params.time_varying ? t : 0];
            g.row(s) -= coef * policy.pi[t].row(s);
            g(s, a) += coef;
        }
    }
    return grad;
}

LogitGrad expected_reinforce_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                      const QueryType& query, double gamma, long long ceiling) {
    PolicyTable policy = policy_table(params, mdp.horizon);
    auto atoms = enumerate_trajectories(mdp, policy, ceiling);

    LogitGrad grad = zero_grad_like(params);
    for (const auto& atom : atoms) {
        VectorXd qhat;
        switch (query.kind) {
            case QueryType::Kind::All: qhat = empirical_q_all(atom.states, atom.actions, mdp, gamma); break;
            case QueryType::Kind::Any: qhat = empirical_q_any(atom.states, atom.actions, mdp, gamma); break;
            case QueryType::Kind::At: qhat = empirical_q_at(atom.states, atom.actions, mdp, query.at_step); break;
        }
        VectorXd cum(mdp.horizon);
        double c = 0.0;
        for (int t = 0; t < mdp.horizon; ++t) {
            double p1 = mdp.event_prob(atom.states[t], atom.actions[t]);
            c = p1 + (1.0 - p1) * c;
            cum[t] = c;
        }
        accumulate_estimator_terms(grad, atom.states, atom.actions, qhat, cum, params, query, atom.prob);
    }
    return grad;
}

LogitGrad finite_difference_gradient(const TabularMdp& mdp, const SoftmaxPolicyParams& params,
                                     const QueryType& query, double step, long long ceiling) {
    LogitGrad grad = zero_grad_like(params);
    SoftmaxPolicyParams probe = params;
    for (size_t k = 0; k < params.logits.size(); ++k)
        for (int s = 0; s < params.logits[k].rows(); ++s)
            for (int a = 0; a < params.logits[k].cols(); ++a) {
                probe.logits[k](s, a) = params.logits[k](s, a) + step;
                double hi = exact_objective(mdp, policy_table(probe, mdp.horizon), query,
                                            params.entropy_coeff, ceiling);
                probe.logits[k](s, a) = params.logits[k](s, a) - step;
                double lo = exact_objective(mdp, policy_table(probe, mdp.horizon), query,
                                            params.entropy_coeff, ceiling);
                probe.logits[k](s, a) = params.logits[k](s, a);
                grad[k](s, a) = (hi - lo) / (2.0 * step);
            }
    return grad;
}

VectorXd discounted_q_branch_expectation(const TabularMdp& mdp, const std::vector<int>& states,
                                         const std::vector<int>& actions, double gamma,
                                         const QueryType& query) {
    if (query.kind == QueryType::Kind::At)
        throw std::invalid_argument("discounted recursions are defined for ALL and ANY");
    const int T = int(states.size());
    TabularMdp transformed = apply_discount_transform(mdp, gamma, query);
    const int absorb = transformed.num_states - 1;

    // trajectory that follows the real one for `keep` steps, absorbing after
    auto branch_traj = [&](int keep) {
        std::vector<int> s(states.begin(), states.end());
        for (int t = keep; t < T; ++t) s[t] = absorb;
        return s;
    };

    VectorXd out(T);
    if (query.kind == QueryType::Kind::All) {
        for (int t = 0; t < T; ++t) {
            // absorption after j surviving transitions from step t
            double expect = 0.0;
            for (int j = 0; j + t + 1 < T; ++j) {
                double p_branch = std::pow(gamma, j) * (1.0 - gamma);
                VectorXd qhat = empirical_q_all(branch_traj(t + j + 1), actions, transformed, 1.0);
                expect += p_branch * qhat[t];
            }
            double p_full = std::pow(gamma, T - 1 - t);
            VectorXd qhat = empirical_q_all(branch_traj(T), actions, transformed, 1.0);
            expect += p_full * qhat[t];
            out[t] = expect;
        }
        return out;
    }

    // ANY: stepwise expectation of the one-step undiscounted update
    out[T - 1] = empirical_q_any(states, actions, mdp, 1.0)[T - 1];
    for (int t = T - 2; t >= 0; --t) {
        double p1 = mdp.event_prob(states[t], actions[t]);
        double survive = log_or_neg_inf(p1 + (1.0 - p1) * std::exp(out[t + 1]));
        double absorbed = empirical_q_any(branch_traj(t + 1), actions, transformed, 1.0)[t];
        out[t] = gamma * survive + (1.0 - gamma) * absorbed;
    }
    return out;
}

double kl_to_posterior(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query,
                       long long ceiling) {
    auto atoms = enumerate_trajectories(mdp, uniform_policy(mdp), ceiling);

    // posterior weight per trajectory under the uniform reference
    std::vector<double> post(atoms.size());
    double z = 0.0;
    for (size_t i = 0; i < atoms.size(); ++i) {
        double ev = std::exp(evidence_log_prob(mdp, query, atoms[i].states, atoms[i].actions));
        post[i] = atoms[i].prob * ev;
        z += post[i];
    }
    if (z <= 0.0) throw std::domain_error("evidence has probability zero; posterior undefined");

    double kl = 0.0;
    for (size_t i = 0; i < atoms.size(); ++i) {
        const auto& atom = atoms[i];
        double q = mdp.initial_dist[atom.states[0]];
        for (int t = 0; t < mdp.horizon; ++t) {
            q *= policy.pi[t](atom.states[t], atom.actions[t]);
            if (t + 1 < mdp.horizon) q *= mdp.transitions[atom.actions[t]](atom.states[t], atom.states[t + 1]);
        }
        if (q <= 0.0) continue;
        double p = post[i] / z;
        if (p <= 0.0) return std::numeric_limits<double>::infinity();
        kl += q * std::log(q / p);
    }
    return kl;
}

}  // namespace evc
