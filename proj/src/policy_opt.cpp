#include "evc/policy_opt.hpp"

#include "evc/oracle.hpp"

#include <cstdio>
#include <sstream>
#include <thread>

namespace evc {

namespace {

VectorXd softmax_row(const Eigen::RowVectorXd& logits) {
    double m = logits.maxCoeff();
    VectorXd e = (logits.array() - m).exp().transpose();
    return e / e.sum();
}

// Upper bound on the number of distinct trajectories; used to decide whether
// exact per-iteration logging is affordable.
double trajectory_count_bound(const TabularMdp& mdp) {
    int init = 0;
    for (int s = 0; s < mdp.num_states; ++s)
        if (mdp.initial_dist[s] > 0.0) ++init;
    double per_step = 0.0;
    for (int s = 0; s < mdp.num_states; ++s) {
        double branch = 0.0;
        for (int a = 0; a < mdp.num_actions; ++a)
            branch += double((mdp.transitions[a].row(s).array() > 0.0).count());
        per_step = std::max(per_step, branch);
    }
    double bound = init * mdp.num_actions;
    for (int t = 0; t + 1 < mdp.horizon; ++t) {
        bound *= per_step;
        if (bound > 1e18) return bound;
    }
    return bound;
}

}  // namespace

SoftmaxPolicyParams SoftmaxPolicyParams::zeros(const TabularMdp& mdp, bool time_varying,
                                               double entropy_coeff) {
    SoftmaxPolicyParams p;
    p.time_varying = time_varying;
    p.entropy_coeff = entropy_coeff;
    p.logits.assign(time_varying ? mdp.horizon : 1, MatrixXd::Zero(mdp.num_states, mdp.num_actions));
    return p;
}

VectorXd SoftmaxPolicyParams::action_probs(int t, int s) const { return softmax_row(slice(t).row(s)); }

double SoftmaxPolicyParams::log_prob(int t, int s, int a) const {
    const auto& row = slice(t).row(s);
    double m = row.maxCoeff();
    double lse = std::log((row.array() - m).exp().sum()) + m;
    return row[a] - lse;
}

PolicyTable policy_table(const SoftmaxPolicyParams& params, int horizon) {
    PolicyTable out;
    out.pi.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
        const MatrixXd& slice = params.slice(t);
        MatrixXd pi(slice.rows(), slice.cols());
        for (int s = 0; s < slice.rows(); ++s) pi.row(s) = softmax_row(slice.row(s)).transpose();
        out.pi.push_back(std::move(pi));
    }
    return out;
}

LogitGrad zero_grad_like(const SoftmaxPolicyParams& params) {
    LogitGrad g;
    g.reserve(params.logits.size());
    for (const auto& slice : params.logits) g.push_back(MatrixXd::Zero(slice.rows(), slice.cols()));
    return g;
}

TrajectoryBatch sample_trajectories(const TabularMdp& mdp, const SoftmaxPolicyParams& params, int n,
                                    std::uint64_t seed, int jobs) {
    require_valid(mdp);
    if (n < 1) throw std::invalid_argument("batch size must be at least 1");
    const int T = mdp.horizon;

    TrajectoryBatch batch;
    batch.states.resize(n, T);
    batch.actions.resize(n, T);
    batch.seed = seed;

    PolicyTable policy = policy_table(params, T);

    auto sample_one = [&](int i) {
        Rng rng(Rng::derive(seed, std::uint64_t(i)));
        int s = rng.categorical(mdp.initial_dist);
        for (int t = 0; t < T; ++t) {
            int a = rng.categorical(policy.pi[t].row(s).transpose());
            batch.states(i, t) = s;
            batch.actions(i, t) = a;
            if (t + 1 < T) s = rng.categorical(mdp.transitions[a].row(s).transpose());
        }
    };

    jobs = std::max(1, jobs);
    if (jobs == 1 || n < 2 * jobs) {
        for (int i = 0; i < n; ++i) sample_one(i);
    } else {
        std::vector<std::thread> workers;
        int chunk = (n + jobs - 1) / jobs;
        for (int w = 0; w < jobs; ++w) {
            int lo = w * chunk, hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            workers.emplace_back([&, lo, hi] {
                for (int i = lo; i < hi; ++i) sample_one(i);
            });
        }
        for (auto& th : workers) th.join();
    }
    return batch;
}

VectorXd empirical_q_all(const std::vector<int>& states, const std::vector<int>& actions,
                         const MatrixXd& log_event, double gamma) {
    const int T = int(states.size());
    VectorXd qhat(T);
    double next = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        double r = log_event(states[t], actions[t]);
        qhat[t] = t == T - 1 ? r : r + gamma * next;
        next = qhat[t];
    }
    return qhat;
}

VectorXd empirical_q_any(const std::vector<int>& states, const std::vector<int>& actions,
                         const MatrixXd& event_prob, double gamma) {
    const int T = int(states.size());
    VectorXd qhat(T);
    double next = neg_inf;
    for (int t = T - 1; t >= 0; --t) {
        double p = event_prob(states[t], actions[t]);
        double rec = t == T - 1 ? log_or_neg_inf(p) : log_or_neg_inf(p + (1.0 - p) * std::exp(next));
        if (gamma == 1.0 || t == T - 1)
            qhat[t] = rec;
        else
            qhat[t] = gamma * rec + (1.0 - gamma) * log_or_neg_inf(p);
        next = qhat[t];
    }
    return qhat;
}

namespace {

MatrixXd log_event_table(const TabularMdp& mdp) {
    MatrixXd out(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) out(s, a) = log_or_neg_inf(mdp.event_prob(s, a));
    return out;
}

}  // namespace

VectorXd empirical_q_all(const std::vector<int>& states, const std::vector<int>& actions,
                         const TabularMdp& mdp, double gamma) {
    return empirical_q_all(states, actions, log_event_table(mdp), gamma);
}

VectorXd empirical_q_any(const std::vector<int>& states, const std::vector<int>& actions,
                         const TabularMdp& mdp, double gamma) {
    return empirical_q_any(states, actions, mdp.event_prob, gamma);
}

VectorXd empirical_q_at(const std::vector<int>& states, const std::vector<int>& actions,
                        const TabularMdp& mdp, int t_star) {
    const int T = int(states.size());
    if (t_star < 0 || t_star >= T) throw std::invalid_argument("t_star out of range");
    VectorXd qhat = VectorXd::Zero(T);
    double lp = log_or_neg_inf(mdp.event_prob(states[t_star], actions[t_star]));
    for (int t = 0; t <= t_star; ++t) qhat[t] = lp;
    return qhat;
}

namespace {

void annotate_impl(TrajectoryBatch& batch, const MatrixXd& event_prob, const MatrixXd& log_event,
                   const QueryType& query, double gamma) {
    if (query.kind == QueryType::Kind::At && gamma != 1.0)
        throw std::invalid_argument("the AT query has no discounted recursion; use gamma = 1");
    const int n = batch.size(), T = batch.horizon();
    batch.empirical_q.resize(n, T);
    batch.cum_event.resize(n, T);
    std::vector<int> states(T), actions(T);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T; ++t) {
            states[t] = batch.states(i, t);
            actions[t] = batch.actions(i, t);
        }
        VectorXd qhat;
        switch (query.kind) {
            case QueryType::Kind::All: qhat = empirical_q_all(states, actions, log_event, gamma); break;
            case QueryType::Kind::Any: qhat = empirical_q_any(states, actions, event_prob, gamma); break;
            case QueryType::Kind::At: {
                VectorXd q = VectorXd::Zero(T);
                double lp = log_event(states[query.at_step], actions[query.at_step]);
                for (int t = 0; t <= query.at_step; ++t) q[t] = lp;
                qhat = q;
                break;
            }
        }
        batch.empirical_q.row(i) = qhat.transpose();
        double c = 0.0;
        for (int t = 0; t < T; ++t) {
            double p = event_prob(states[t], actions[t]);
            c = p + (1.0 - p) * c;
            batch.cum_event(i, t) = c;
        }
    }
    batch.query = query;
    batch.gamma = gamma;
    batch.annotated = true;
}

}  // namespace

void annotate_batch(TrajectoryBatch& batch, const TabularMdp& mdp, const QueryType& query, double gamma) {
    annotate_impl(batch, mdp.event_prob, log_event_table(mdp), query, gamma);
}

void annotate_batch(TrajectoryBatch& batch, const MatrixXd& event_prob, const MatrixXd& log_event,
                    const QueryType& query, double gamma) {
    annotate_impl(batch, event_prob, log_event, query, gamma);
}

void accumulate_estimator_terms(LogitGrad& grad, const std::vector<int>& states,
                                const std::vector<int>& actions, const VectorXd& empirical_q,
                                const VectorXd& cum_event, const SoftmaxPolicyParams& params,
                                const QueryType& query, double weight, const VectorXd* baseline) {
    const int T = int(states.size());
    const double alpha = params.entropy_coeff;

    // entropy-to-go of the realized actions: -sum_{t' >= t} log pi
    VectorXd h_togo(T);
    double acc = 0.0;
    for (int t = T - 1; t >= 0; --t) {
        acc -= params.log_prob(t, states[t], actions[t]);
        h_togo[t] = acc;
    }

    for (int t = 0; t < T; ++t) {
        double mult;
        if (query.kind == QueryType::Kind::Any) {
            double cprev = t == 0 ? 0.0 : cum_event[t - 1];
            mult = log_or_neg_inf(cprev + (1.0 - cprev) * std::exp(empirical_q[t]));
        } else {
            mult = empirical_q[t];
        }
        assert(mult != neg_inf);
        if (baseline) mult -= (*baseline)[t];
        double coef = weight * (mult + alpha * h_togo[t]);

        int s = states[t], a = actions[t];
        VectorXd pi = params.action_probs(t, s);
        MatrixXd& g = grad[params.time_varying ? t : 0];
        g.row(s) -= coef * pi.transpose();
        g(s, a) += coef;
    }
}

ReinforceResult reinforce_gradient(const TrajectoryBatch& batch, const SoftmaxPolicyParams& params,
                                   const QueryType& query, bool use_baseline) {
    if (!batch.annotated || !(batch.query == query))
        throw std::invalid_argument("batch must be annotated for the same query");
    const int n = batch.size(), T = batch.horizon();

    ReinforceResult res;
    res.grad = zero_grad_like(params);

    std::vector<char> keep(n, 1);
    for (int i = 0; i < n; ++i) {
        bool zero_evidence = query.kind == QueryType::Kind::Any ? batch.cum_event(i, T - 1) == 0.0
                                                                : batch.empirical_q(i, 0) == neg_inf;
        if (zero_evidence) {
            keep[i] = 0;
            res.rejected.push_back(i);
        }
    }
    int kept = n - int(res.rejected.size());
    if (kept == 0) return res;

    VectorXd baseline;
    if (use_baseline) {
        baseline = VectorXd::Zero(T);
        for (int i = 0; i < n; ++i) {
            if (!keep[i]) continue;
            for (int t = 0; t < T; ++t) {
                double mult;
                if (query.kind == QueryType::Kind::Any) {
                    double cprev = t == 0 ? 0.0 : batch.cum_event(i, t - 1);
                    mult = log_or_neg_inf(cprev + (1.0 - cprev) * std::exp(batch.empirical_q(i, t)));
                } else {
                    mult = batch.empirical_q(i, t);
                }
                baseline[t] += mult / kept;
            }
        }
    }

    std::vector<int> states(T), actions(T);
    for (int i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        for (int t = 0; t < T; ++t) {
            states[t] = batch.states(i, t);
            actions[t] = batch.actions(i, t);
        }
        accumulate_estimator_terms(res.grad, states, actions, batch.empirical_q.row(i).transpose(),
                                   batch.cum_event.row(i).transpose(), params, query, 1.0 / kept,
                                   use_baseline ? &baseline : nullptr);
    }
    return res;
}

std::string TrainingLog::to_csv() const {
    std::ostringstream out;
    out << "iter,objective_exact,objective_mc,grad_norm,entropy\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.objective_exact,
                      r.objective_mc, r.grad_norm, r.entropy);
        out << buf;
    }
    return out.str();
}

TrainResult train_policy(const TabularMdp& mdp, const QueryType& query, const TrainConfig& config) {
    require_valid(mdp);
    if (config.iters <= 0 || config.batch_size <= 0 || config.step_size <= 0.0)
        throw std::invalid_argument("training config values must be positive");
    if (!(config.gamma > 0.0 && config.gamma <= 1.0)) throw std::invalid_argument("gamma outside (0,1]");

    SoftmaxPolicyParams params = SoftmaxPolicyParams::zeros(mdp, config.time_varying, config.entropy_coeff);
    const bool exact_feasible = trajectory_count_bound(mdp) <= double(config.exact_log_ceiling);

    TrainResult result;
    for (int iter = 0; iter < config.iters; ++iter) {
        TrajectoryBatch batch =
            sample_trajectories(mdp, params, config.batch_size, Rng::derive(config.seed, iter), config.jobs);
        annotate_batch(batch, mdp, query, config.gamma);
        ReinforceResult est = reinforce_gradient(batch, params, query);

        // Monte Carlo objective: mean full-trajectory value plus entropy term
        double mc = 0.0;
        int kept = 0;
        {
            size_t rej = 0;
            for (int i = 0; i < batch.size(); ++i) {
                if (rej < est.rejected.size() && est.rejected[rej] == i) {
                    ++rej;
                    continue;
                }
                double val = query.kind == QueryType::Kind::Any
                                 ? log_or_neg_inf(batch.cum_event(i, batch.horizon() - 1))
                                 : batch.empirical_q(i, 0);
                double h = 0.0;
                for (int t = 0; t < batch.horizon(); ++t)
                    h -= params.log_prob(t, batch.states(i, t), batch.actions(i, t));
                mc += val + config.entropy_coeff * h;
                ++kept;
            }
            mc = kept > 0 ? mc / kept : std::numeric_limits<double>::quiet_NaN();
        }
        if (std::isnan(mc))
            throw std::runtime_error("training diverged (objective NaN) at iteration " + std::to_string(iter));

        double exact = std::numeric_limits<double>::quiet_NaN();
        if (exact_feasible)
            exact = exact_objective(mdp, policy_table(params, mdp.horizon), query, config.entropy_coeff);

        double grad_norm_sq = 0.0;
        for (const auto& g : est.grad) grad_norm_sq += g.squaredNorm();

        double entropy = 0.0;
        for (int t = 0; t < mdp.horizon; ++t)
            for (int s = 0; s < mdp.num_states; ++s) {
                VectorXd pi = params.action_probs(t, s);
                for (int a = 0; a < mdp.num_actions; ++a)
                    if (pi[a] > 0.0) entropy -= pi[a] * std::log(pi[a]);
            }
        entropy /= mdp.horizon * mdp.num_states;

        result.log.rows.push_back({iter, exact, mc, std::sqrt(grad_norm_sq), entropy});

        for (size_t k = 0; k < params.logits.size(); ++k) params.logits[k] += config.step_size * est.grad[k];
    }
    result.params = std::move(params);
    return result;
}

std::vector<VectorXd> state_occupancies(const TabularMdp& mdp, const PolicyTable& policy) {
    std::vector<VectorXd> rho(mdp.horizon);
    rho[0] = mdp.initial_dist;
    for (int t = 0; t + 1 < mdp.horizon; ++t) {
        VectorXd next = VectorXd::Zero(mdp.num_states);
        for (int s = 0; s < mdp.num_states; ++s) {
            if (rho[t][s] <= 0.0) continue;
            for (int a = 0; a < mdp.num_actions; ++a) {
                double w = rho[t][s] * policy.pi[t](s, a);
                if (w > 0.0) next += w * mdp.transitions[a].row(s).transpose();
            }
        }
        rho[t + 1] = next;
    }
    return rho;
}

MatrixXd marginal_policy(const TabularMdp& mdp, const PolicyTable& policy) {
    auto rho = state_occupancies(mdp, policy);
    MatrixXd weighted = MatrixXd::Zero(mdp.num_states, mdp.num_actions);
    VectorXd mass = VectorXd::Zero(mdp.num_states);
    for (int t = 0; t < mdp.horizon; ++t) {
        for (int s = 0; s < mdp.num_states; ++s) {
            weighted.row(s) += rho[t][s] * policy.pi[t].row(s);
            mass[s] += rho[t][s];
        }
    }
    for (int s = 0; s < mdp.num_states; ++s) {
        if (mass[s] > 0.0)
            weighted.row(s) /= mass[s];
        else
            weighted.row(s).setConstant(1.0 / mdp.num_actions);
    }
    return weighted;
}

double policy_success_probability(const TabularMdp& mdp, const PolicyTable& policy, const QueryType& query) {
    const int T = mdp.horizon;
    switch (query.kind) {
        case QueryType::Kind::All: {
            // mass(s) = P(at s, all events so far)
            VectorXd mass = mdp.initial_dist;
            for (int t = 0; t < T; ++t) {
                VectorXd next = VectorXd::Zero(mdp.num_states);
                double terminal = 0.0;
                for (int s = 0; s < mdp.num_states; ++s) {
                    if (mass[s] <= 0.0) continue;
                    for (int a = 0; a < mdp.num_actions; ++a) {
                        double w = mass[s] * policy.pi[t](s, a) * mdp.event_prob(s, a);
                        if (w <= 0.0) continue;
                        if (t + 1 < T)
                            next += w * mdp.transitions[a].row(s).transpose();
                        else
                            terminal += w;
                    }
                }
                if (t + 1 == T) return terminal;
                mass = next;
            }
            return 0.0;
        }
        case QueryType::Kind::Any: {
            // survive(s) = P(at s, no event yet)
            VectorXd survive = mdp.initial_dist;
            double none = 0.0;
            for (int t = 0; t < T; ++t) {
                VectorXd next = VectorXd::Zero(mdp.num_states);
                double terminal = 0.0;
                for (int s = 0; s < mdp.num_states; ++s) {
                    if (survive[s] <= 0.0) continue;
                    for (int a = 0; a < mdp.num_actions; ++a) {
                        double w = survive[s] * policy.pi[t](s, a) * (1.0 - mdp.event_prob(s, a));
                        if (w <= 0.0) continue;
                        if (t + 1 < T)
                            next += w * mdp.transitions[a].row(s).transpose();
                        else
                            terminal += w;
                    }
                }
                if (t + 1 == T) none = terminal;
                survive = next;
            }
            return 1.0 - none;
        }
        case QueryType::Kind::At: {
            auto rho = state_occupancies(mdp, policy);
            double p = 0.0;
            for (int s = 0; s < mdp.num_states; ++s)
                for (int a = 0; a < mdp.num_actions; ++a)
                    p += rho[query.at_step][s] * policy.pi[query.at_step](s, a) * mdp.event_prob(s, a);
            return p;
        }
    }
    return 0.0;
}

std::vector<int> greedy_rollout(const TabularMdp& mdp, const SoftmaxPolicyParams& params) {
    std::vector<int> states;
    int s = 0;
    mdp.initial_dist.maxCoeff(&s);
    for (int t = 0; t < mdp.horizon; ++t) {
        states.push_back(s);
        int a = 0;
        params.slice(t).row(s).maxCoeff(&a);
        if (t + 1 < mdp.horizon) {
            int sp = 0;
            mdp.transitions[a].row(s).maxCoeff(&sp);
            s = sp;
        }
    }
    return states;
}

}  // namespace evc
