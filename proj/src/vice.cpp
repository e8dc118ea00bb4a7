#include "evc/vice.hpp"

#include "evc/inference.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace evc {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// dL/df contributions for one (s, a) sample, chained onto logits and offset.
// f = log sigmoid(l) + c, so df/dl = 1 - sigmoid(l) and df/dc = 1.
struct DiscGrad {
    MatrixXd logits;
    double offset = 0.0;

    explicit DiscGrad(const EventModel& model) : logits(MatrixXd::Zero(model.logits.rows(), model.logits.cols())) {}

    void add(const EventModel& model, int s, int a, double dl_df) {
        logits(s, a) += dl_df * (1.0 - model.prob(s, a));
        offset += dl_df;
    }
};

void collapse_state_only(MatrixXd& grad_logits) {
    // one shared parameter per state: the row gradient is the sum over actions
    VectorXd row_sum = grad_logits.rowwise().sum();
    grad_logits = row_sum.replicate(1, grad_logits.cols());
}

}  // namespace

std::string serialize_dataset(const SuccessDataset& dataset) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& [s, a] : dataset.examples) {
        nlohmann::ordered_json e;
        e["s"] = s;
        if (a >= 0)
            e["a"] = a;
        else
            e["a"] = nullptr;
        doc.push_back(e);
    }
    return doc.dump(2) + "\n";
}

SuccessDataset parse_dataset(const std::string& text, const QueryType& query_origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("dataset parse error: ") + e.what());
    }
    if (!doc.is_array()) throw std::invalid_argument("dataset must be a JSON list of {s, a}");
    SuccessDataset out;
    out.query_origin = query_origin;
    for (const auto& e : doc) {
        if (!e.is_object() || !e.contains("s") || !e.at("s").is_number_integer())
            throw std::invalid_argument("dataset entries must be {s:int, a:int|null}");
        int s = e.at("s").get<int>();
        int a = -1;
        if (e.contains("a") && !e.at("a").is_null()) a = e.at("a").get<int>();
        out.examples.emplace_back(s, a);
    }
    if (out.examples.empty()) throw std::invalid_argument("dataset is empty");
    return out;
}

EventModel EventModel::zeros(int num_states, int num_actions, bool state_only) {
    EventModel m;
    m.logits = MatrixXd::Zero(num_states, num_actions);
    m.state_only = state_only;
    return m;
}

MatrixXd EventModel::prob_table() const {
    return logits.unaryExpr([](double l) { return 1.0 / (1.0 + std::exp(-l)); });
}

MatrixXd EventModel::f_table() const {
    return logits.unaryExpr([this](double l) { return std::log(1.0 / (1.0 + std::exp(-l))) + offset; });
}

double discriminator_output(const DiscriminatorState& state, int s, int a) {
    double pi = state.policy_sa(s, a);
    if (pi <= 0.0) throw std::domain_error("discriminator undefined where the policy has zero mass");
    return sigmoid(state.model.f(s, a) - std::log(pi));
}

EventModel discriminator_update(const DiscriminatorState& state, const SuccessDataset& positives,
                                const TrajectoryBatch& negatives, double step_size) {
    if (positives.examples.empty()) throw std::invalid_argument("no positive examples");
    if (negatives.size() == 0) throw std::invalid_argument("no negative samples");

    const EventModel& model = state.model;
    const int num_a = int(model.logits.cols());
    DiscGrad grad(model);

    // positives, label 1: dL/df = -(1 - D) / N_pos
    const double wp = 1.0 / double(positives.examples.size());
    for (const auto& [s, a] : positives.examples) {
        if (a >= 0) {
            double d = discriminator_output(state, s, a);
            grad.add(model, s, a, -wp * (1.0 - d));
        } else {
            for (int aa = 0; aa < num_a; ++aa) {
                double d = discriminator_output(state, s, aa);
                grad.add(model, s, aa, -wp * (1.0 - d) / num_a);
            }
        }
    }

    // policy samples, label 0: dL/df = D / N_neg
    const double wn = 1.0 / double(negatives.size() * negatives.horizon());
    for (int i = 0; i < negatives.size(); ++i)
        for (int t = 0; t < negatives.horizon(); ++t) {
            int s = negatives.states(i, t), a = negatives.actions(i, t);
            double d = discriminator_output(state, s, a);
            grad.add(model, s, a, wn * d);
        }

    if (model.state_only) collapse_state_only(grad.logits);

    EventModel out = model;
    out.logits -= step_size * grad.logits;
    out.offset -= step_size * grad.offset;
    return out;
}

SuccessDataset collect_success_examples(const TabularMdp& mdp, const QueryType& query, int n,
                                        std::uint64_t seed, long long max_attempts) {
    require_valid(mdp);
    if (n < 1) throw std::invalid_argument("need at least one example");
    if (query.kind == QueryType::Kind::At && (query.at_step < 0 || query.at_step >= mdp.horizon))
        throw std::invalid_argument("t_star out of range");

    MessageTable msgs;
    switch (query.kind) {
        case QueryType::Kind::All: msgs = backward_all(mdp); break;
        case QueryType::Kind::Any: msgs = backward_any(mdp); break;
        case QueryType::Kind::At: msgs = backward_at(mdp, query.at_step); break;
    }
    PolicyTable policy = policy_from_messages(msgs);
    if (policy_success_probability(mdp, policy, query) <= 0.0)
        throw std::runtime_error("no success examples generatable: the event has probability zero");

    SuccessDataset out;
    out.query_origin = query;
    Rng rng(seed);
    long long attempts = 0;
    std::vector<int> states(mdp.horizon), actions(mdp.horizon);
    std::vector<char> events(mdp.horizon);

    while (int(out.examples.size()) < n) {
        if (++attempts > max_attempts)
            throw std::runtime_error("rejection sampling exceeded " + std::to_string(max_attempts) +
                                     " attempts");
        int s = rng.categorical(mdp.initial_dist);
        for (int t = 0; t < mdp.horizon; ++t) {
            int a = rng.categorical(policy.pi[t].row(s).transpose());
            states[t] = s;
            actions[t] = a;
            events[t] = rng.next_double() < mdp.event_prob(s, a);
            if (t + 1 < mdp.horizon) s = rng.categorical(mdp.transitions[a].row(s).transpose());
        }
        switch (query.kind) {
            case QueryType::Kind::Any: {
                for (int t = 0; t < mdp.horizon; ++t)
                    if (events[t]) {
                        out.examples.emplace_back(states[t], actions[t]);
                        break;
                    }
                break;
            }
            case QueryType::Kind::All: {
                bool all = true;
                for (int t = 0; t < mdp.horizon; ++t) all = all && events[t];
                if (all) {
                    int t = std::min(int(rng.next_double() * mdp.horizon), mdp.horizon - 1);
                    out.examples.emplace_back(states[t], actions[t]);
                }
                break;
            }
            case QueryType::Kind::At:
                if (events[query.at_step])
                    out.examples.emplace_back(states[query.at_step], actions[query.at_step]);
                break;
        }
    }
    return out;
}

std::string ViceLog::to_csv() const {
    std::ostringstream out;
    out << "iter,disc_loss,disc_acc,task_metric,mean_reward\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.disc_loss, r.disc_acc,
                      r.task_metric, r.mean_reward);
        out << buf;
    }
    return out.str();
}

ViceResult vice_train(const TabularMdp& mdp_dynamics, const SuccessDataset& dataset, const QueryType& query,
                      const ViceConfig& config) {
    if (dataset.examples.empty()) throw std::invalid_argument("dataset is empty");
    if (config.iters <= 0 || config.batch_size <= 0 || config.disc_steps <= 0)
        throw std::invalid_argument("vice config values must be positive");
    for (const auto& [s, a] : dataset.examples)
        if (s < 0 || s >= mdp_dynamics.num_states || a >= mdp_dynamics.num_actions)
            throw std::invalid_argument("dataset index out of MDP bounds");

    // the dynamics MDP's own event table plays no role
    TabularMdp mdp = mdp_dynamics;
    mdp.event_prob.setZero();
    require_valid(mdp);

    ViceResult result;
    result.model = EventModel::zeros(mdp.num_states, mdp.num_actions, config.state_only);
    result.params = SoftmaxPolicyParams::zeros(mdp, true, config.entropy_coeff);

    double first_metric = std::numeric_limits<double>::quiet_NaN();
    double last_metric = std::numeric_limits<double>::quiet_NaN();

    for (int iter = 0; iter < config.iters; ++iter) {
        TrajectoryBatch batch = sample_trajectories(mdp, result.params, config.batch_size,
                                                    Rng::derive(config.seed, iter), config.jobs);

        PolicyTable policy = policy_table(result.params, mdp.horizon);
        DiscriminatorState disc{result.model, marginal_policy(mdp, policy)};
        for (int k = 0; k < config.disc_steps; ++k)
            disc.model = discriminator_update(disc, dataset, batch, config.disc_step);
        result.model = disc.model;

        // policy step on the learned event model under the chosen query
        MatrixXd probs = result.model.prob_table();
        MatrixXd log_event = query.kind == QueryType::Kind::All
                                 ? result.model.f_table()
                                 : probs.unaryExpr([](double p) { return log_or_neg_inf(p); });
        annotate_batch(batch, probs, log_event, query, config.gamma);
        ReinforceResult est = reinforce_gradient(batch, result.params, query);
        for (size_t k = 0; k < result.params.logits.size(); ++k)
            result.params.logits[k] += config.policy_step * est.grad[k];

        // diagnostics
        double loss = 0.0, acc = 0.0;
        {
            const double wp = 1.0 / double(dataset.examples.size());
            const int num_a = mdp.num_actions;
            for (const auto& [s, a] : dataset.examples) {
                if (a >= 0) {
                    double d = discriminator_output(disc, s, a);
                    loss -= wp * std::log(std::max(d, 1e-300));
                    acc += wp * (d > 0.5 ? 0.5 : 0.0);
                } else {
                    for (int aa = 0; aa < num_a; ++aa) {
                        double d = discriminator_output(disc, s, aa);
                        loss -= wp / num_a * std::log(std::max(d, 1e-300));
                        acc += wp / num_a * (d > 0.5 ? 0.5 : 0.0);
                    }
                }
            }
            const double wn = 1.0 / double(batch.size() * batch.horizon());
            for (int i = 0; i < batch.size(); ++i)
                for (int t = 0; t < batch.horizon(); ++t) {
                    double d = discriminator_output(disc, batch.states(i, t), batch.actions(i, t));
                    loss -= wn * std::log(std::max(1.0 - d, 1e-300));
                    acc += wn * (d < 0.5 ? 0.5 : 0.0);
                }
        }

        double mean_reward = 0.0;
        for (int i = 0; i < batch.size(); ++i)
            for (int t = 0; t < batch.horizon(); ++t) {
                int s = batch.states(i, t), a = batch.actions(i, t);
                mean_reward += result.model.f(s, a) - std::log(std::max(disc.policy_sa(s, a), 1e-300));
            }
        mean_reward /= batch.size() * batch.horizon();

        double metric = std::numeric_limits<double>::quiet_NaN();
        if (config.eval_mdp) {
            metric = policy_success_probability(*config.eval_mdp, policy_table(result.params, mdp.horizon),
                                                query);
            if (iter == 0) first_metric = metric;
            last_metric = metric;
        }

        if (std::isnan(loss))
            throw std::runtime_error("vice training diverged (NaN loss) at iteration " + std::to_string(iter));
        result.log.rows.push_back({iter, loss, acc, metric, mean_reward});
    }

    result.log.improved = !std::isnan(first_metric) && last_metric > first_metric + 1e-6;
    return result;
}

EventModel naive_classifier_baseline(const SuccessDataset& dataset, const TabularMdp& mdp, int n_negatives,
                                     std::uint64_t seed, int fit_steps, double fit_step_size) {
    if (dataset.examples.empty()) throw std::invalid_argument("dataset is empty");
    if (n_negatives < int(dataset.examples.size()))
        throw std::invalid_argument("need at least as many negatives as positives");

    // negatives: (s, a) pairs visited by the uniform random policy
    SoftmaxPolicyParams uniform = SoftmaxPolicyParams::zeros(mdp);
    int n_traj = (n_negatives + mdp.horizon - 1) / mdp.horizon;
    TrajectoryBatch batch = sample_trajectories(mdp, uniform, n_traj, seed);
    std::vector<std::pair<int, int>> negatives;
    negatives.reserve(n_negatives);
    for (int i = 0; i < batch.size() && int(negatives.size()) < n_negatives; ++i)
        for (int t = 0; t < batch.horizon() && int(negatives.size()) < n_negatives; ++t)
            negatives.emplace_back(batch.states(i, t), batch.actions(i, t));

    // balanced logistic fit of sigmoid(logits) directly; classes reweighted
    EventModel model = EventModel::zeros(mdp.num_states, mdp.num_actions);
    const double wp = 1.0 / double(dataset.examples.size());
    const double wn = 1.0 / double(negatives.size());
    const int num_a = mdp.num_actions;
    for (int step = 0; step < fit_steps; ++step) {
        MatrixXd grad = MatrixXd::Zero(mdp.num_states, mdp.num_actions);
        for (const auto& [s, a] : dataset.examples) {
            if (a >= 0)
                grad(s, a) -= wp * (1.0 - model.prob(s, a));
            else
                for (int aa = 0; aa < num_a; ++aa) grad(s, aa) -= wp / num_a * (1.0 - model.prob(s, aa));
        }
        for (const auto& [s, a] : negatives) grad(s, a) += wn * model.prob(s, a);
        model.logits -= fit_step_size * grad;
    }
    return model;
}

}  // namespace evc
