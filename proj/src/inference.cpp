#include "evc/inference.hpp"

#include <json.hpp>

namespace evc {

namespace {

// V from Q with the uniform reference prior kept explicit: exp(V) is the
// probability of the remaining evidence under uniformly random actions.
VectorXd state_values(const MatrixXd& q) {
    const int num_s = int(q.rows());
    VectorXd v(num_s);
    for (int s = 0; s < num_s; ++s) {
        double x = logsumexp(q.row(s).transpose()) - std::log(double(q.cols()));
        assert(!std::isnan(x));
        v[s] = std::min(x, 0.0);  // guard rounding above log 1
    }
    return v;
}

// exp(V[t+1]) per next state; probability-space expectation is exact here
// because every message is a probability in [0, 1].
VectorXd exp_values(const VectorXd& v) {
    return v.array().exp();
}

MessageTable run_backward(const TabularMdp& mdp, const QueryType& query) {
    require_valid(mdp);
    const int T = mdp.horizon;
    const int num_s = mdp.num_states;
    const int num_a = mdp.num_actions;

    MessageTable out;
    out.query = query;
    out.horizon = T;
    out.q.assign(T, MatrixXd::Zero(num_s, num_a));
    out.v.assign(T, VectorXd::Zero(num_s));

    for (int t = T - 1; t >= 0; --t) {
        MatrixXd& q = out.q[t];
        VectorXd ev;  // E_{s'}[exp V[t+1](s')] column per action below
        if (t < T - 1) ev = exp_values(out.v[t + 1]);
        for (int a = 0; a < num_a; ++a) {
            VectorXd expect;
            if (t < T - 1)
                expect = mdp.transitions[a] * ev;
            for (int s = 0; s < num_s; ++s) {
                double p1 = mdp.event_prob(s, a);
                double e = t < T - 1 ? std::min(expect[s], 1.0) : 1.0;
                double value;
                switch (query.kind) {
                    case QueryType::Kind::All:
                        value = log_or_neg_inf(p1) + log_or_neg_inf(e);
                        break;
                    case QueryType::Kind::Any:
                        value = log_or_neg_inf(p1 + (1.0 - p1) * e);
                        break;
                    case QueryType::Kind::At:
                        if (t > query.at_step)
                            value = 0.0;
                        else if (t == query.at_step)
                            value = log_or_neg_inf(p1);
                        else
                            value = log_or_neg_inf(e);
                        break;
                    default:
                        value = neg_inf;
                }
                assert(!std::isnan(value));
                q(s, a) = std::min(value, 0.0);
            }
        }
        out.v[t] = state_values(q);
    }
    return out;
}

}  // namespace

PolicyTable uniform_policy(const TabularMdp& mdp) {
    PolicyTable p;
    p.pi.assign(mdp.horizon,
                MatrixXd::Constant(mdp.num_states, mdp.num_actions, 1.0 / mdp.num_actions));
    return p;
}

MessageTable backward_all(const TabularMdp& mdp) { return run_backward(mdp, QueryType::all()); }

MessageTable backward_any(const TabularMdp& mdp) { return run_backward(mdp, QueryType::any()); }

MessageTable backward_at(const TabularMdp& mdp, int t_star) {
    if (t_star < 0 || t_star >= mdp.horizon)
        throw std::invalid_argument("t_star " + std::to_string(t_star) + " outside [0, " +
                                    std::to_string(mdp.horizon - 1) + "]");
    return run_backward(mdp, QueryType::at(t_star));
}

PolicyTable policy_from_messages(const MessageTable& msgs) {
    PolicyTable out;
    out.pi.reserve(msgs.q.size());
    for (int t = 0; t < int(msgs.q.size()); ++t) {
        const MatrixXd& q = msgs.q[t];
        const int num_a = int(q.cols());
        MatrixXd pi(q.rows(), num_a);
        for (int s = 0; s < q.rows(); ++s) {
            double v = msgs.v[t][s];
            if (v == neg_inf) {
                pi.row(s).setConstant(1.0 / num_a);  // posterior undefined, keep the prior
                continue;
            }
            double total = 0.0;
            for (int a = 0; a < num_a; ++a) {
                double w = q(s, a) == neg_inf ? 0.0 : std::exp(q(s, a) - v) / num_a;
                pi(s, a) = w;
                total += w;
            }
            pi.row(s) /= total;
        }
        out.pi.push_back(std::move(pi));
    }
    return out;
}

ForwardTrace forward_any(const TabularMdp& mdp, const std::vector<std::pair<int, int>>& prefix) {
    ForwardTrace trace;
    trace.prefix = prefix;
    trace.cum_event_prob.reserve(prefix.size());
    double c = 0.0;
    for (const auto& [s, a] : prefix) {
        if (s < 0 || s >= mdp.num_states || a < 0 || a >= mdp.num_actions)
            throw std::invalid_argument("prefix step out of range");
        double p1 = mdp.event_prob(s, a);
        c = p1 + (1.0 - p1) * c;
        trace.cum_event_prob.push_back(c);
    }
    return trace;
}

VectorXd non_seeking_action_dist(const TabularMdp& mdp, const MessageTable& msgs, const ForwardTrace& trace,
                                 int t, int state) {
    if (msgs.query.kind != QueryType::Kind::Any)
        throw std::invalid_argument("non-seeking policy is defined for the ANY query");
    if (t < 0 || t >= msgs.horizon) throw std::invalid_argument("step out of range");
    if (state < 0 || state >= mdp.num_states) throw std::invalid_argument("state out of range");
    if (int(trace.cum_event_prob.size()) != t)
        throw std::invalid_argument("trace must cover exactly the steps before t");

    const double c = t == 0 ? 0.0 : trace.cum_event_prob.back();
    const int num_a = mdp.num_actions;

    // p(a_t | history, t* in [0, T-1]) ∝ p(a_t|s_t) [c_{t-1} + (1-c_{t-1}) exp Q[t](s_t, a_t)];
    // the uniform prior cancels in the normalization.
    VectorXd w(num_a);
    for (int a = 0; a < num_a; ++a) w[a] = c + (1.0 - c) * std::exp(msgs.q[t](state, a));
    double total = w.sum();
    if (total <= 0.0) return VectorXd::Constant(num_a, 1.0 / num_a);
    return w / total;
}

MessageTable backward_best_case(const TabularMdp& mdp, const QueryType& query) {
    require_valid(mdp);
    if (query.kind == QueryType::Kind::At && (query.at_step < 0 || query.at_step >= mdp.horizon))
        throw std::invalid_argument("t_star out of range");
    const int T = mdp.horizon;
    const int num_s = mdp.num_states;
    const int num_a = mdp.num_actions;

    MessageTable out;
    out.query = query;
    out.horizon = T;
    out.q.assign(T, MatrixXd::Zero(num_s, num_a));
    out.v.assign(T, VectorXd::Zero(num_s));

    for (int t = T - 1; t >= 0; --t) {
        for (int a = 0; a < num_a; ++a)
            for (int s = 0; s < num_s; ++s) {
                double p1 = mdp.event_prob(s, a);
                double best_next = 1.0;
                if (t < T - 1) {
                    best_next = 0.0;
                    for (int sp = 0; sp < num_s; ++sp)
                        if (mdp.transitions[a](s, sp) > 0.0)
                            best_next = std::max(best_next, std::exp(out.v[t + 1][sp]));
                }
                double value;
                switch (query.kind) {
                    case QueryType::Kind::All: value = log_or_neg_inf(p1 * best_next); break;
                    case QueryType::Kind::Any: value = log_or_neg_inf(p1 + (1.0 - p1) * best_next); break;
                    case QueryType::Kind::At:
                        if (t > query.at_step)
                            value = 0.0;
                        else if (t == query.at_step)
                            value = log_or_neg_inf(p1);
                        else
                            value = log_or_neg_inf(best_next);
                        break;
                    default: value = neg_inf;
                }
                out.q[t](s, a) = std::min(value, 0.0);
            }
        for (int s = 0; s < num_s; ++s) out.v[t][s] = out.q[t].row(s).maxCoeff();
    }
    return out;
}

BestCaseTrajectory best_case_trajectory(const TabularMdp& mdp, const QueryType& query) {
    MessageTable best = backward_best_case(mdp, query);
    BestCaseTrajectory traj;

    int s = 0;
    double best_start = neg_inf;
    for (int cand = 0; cand < mdp.num_states; ++cand)
        if (mdp.initial_dist[cand] > 0.0 && best.v[0][cand] > best_start) {
            best_start = best.v[0][cand];
            s = cand;
        }

    for (int t = 0; t < mdp.horizon; ++t) {
        int a = 0;
        for (int cand = 1; cand < mdp.num_actions; ++cand)
            if (best.q[t](s, cand) > best.q[t](s, a)) a = cand;
        traj.states.push_back(s);
        traj.actions.push_back(a);
        if (t + 1 < mdp.horizon) {
            int sp = -1;
            double best_next = neg_inf;
            for (int cand = 0; cand < mdp.num_states; ++cand)
                if (mdp.transitions[a](s, cand) > 0.0 && best.v[t + 1][cand] > best_next) {
                    best_next = best.v[t + 1][cand];
                    sp = cand;
                }
            s = sp;
        }
    }
    traj.evidence_prob = std::exp(best_start);
    return traj;
}

std::string serialize_solution(const MessageTable& msgs, const PolicyTable& policy) {
    using Json = nlohmann::ordered_json;
    auto encode = [](double x) -> Json {
        if (x == neg_inf) return "-inf";
        return x;
    };

    Json doc;
    switch (msgs.query.kind) {
        case QueryType::Kind::All: doc["query"] = "all"; break;
        case QueryType::Kind::Any: doc["query"] = "any"; break;
        case QueryType::Kind::At:
            doc["query"] = "at";
            doc["at_step"] = msgs.query.at_step;
            break;
    }
    doc["horizon"] = msgs.horizon;

    doc["Q"] = Json::array();
    for (const auto& q : msgs.q) {
        Json slice = Json::array();
        for (int s = 0; s < q.rows(); ++s) {
            Json row = Json::array();
            for (int a = 0; a < q.cols(); ++a) row.push_back(encode(q(s, a)));
            slice.push_back(row);
        }
        doc["Q"].push_back(slice);
    }
    doc["V"] = Json::array();
    for (const auto& v : msgs.v) {
        Json row = Json::array();
        for (int s = 0; s < v.size(); ++s) row.push_back(encode(v[s]));
        doc["V"].push_back(row);
    }
    doc["pi"] = Json::array();
    for (const auto& p : policy.pi) {
        Json slice = Json::array();
        for (int s = 0; s < p.rows(); ++s) {
            Json row = Json::array();
            for (int a = 0; a < p.cols(); ++a) row.push_back(p(s, a));
            slice.push_back(row);
        }
        doc["pi"].push_back(slice);
    }
    return doc.dump(2) + "\n";
}

}  // namespace evc
