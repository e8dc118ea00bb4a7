#include "evc/mdp.hpp"

#include <cstdio>
#include <sstream>

namespace evc {

namespace {

std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

constexpr double kStochasticTol = 1e-12;

}  // namespace

std::string to_string(const QueryType& q) {
    switch (q.kind) {
        case QueryType::Kind::All: return "all";
        case QueryType::Kind::Any: return "any";
        case QueryType::Kind::At: return "at(" + std::to_string(q.at_step) + ")";
    }
    return "?";
}

bool TabularMdp::has_deterministic_dynamics() const {
    for (const auto& p : transitions)
        if (((p.array() != 0.0) && (p.array() != 1.0)).any()) return false;
    return true;
}

std::vector<std::string> validate(const TabularMdp& mdp) {
    std::vector<std::string> out;
    if (mdp.num_states <= 0) out.push_back("num_states must be positive, got " + std::to_string(mdp.num_states));
    if (mdp.num_actions <= 0) out.push_back("num_actions must be positive, got " + std::to_string(mdp.num_actions));
    if (mdp.horizon <= 0) out.push_back("horizon must be positive, got " + std::to_string(mdp.horizon));
    if (!out.empty()) return out;  // shape checks below assume positive sizes

    const int num_s = mdp.num_states;
    const int num_a = mdp.num_actions;

    if (int(mdp.transitions.size()) != num_a)
        out.push_back("transitions holds " + std::to_string(mdp.transitions.size()) + " action slices, expected " +
                      std::to_string(num_a));
    if (mdp.initial_dist.size() != num_s)
        out.push_back("initial_dist has length " + std::to_string(mdp.initial_dist.size()) + ", expected " +
                      std::to_string(num_s));
    if (mdp.event_prob.rows() != num_s || mdp.event_prob.cols() != num_a)
        out.push_back("event_prob has shape " + std::to_string(mdp.event_prob.rows()) + "x" +
                      std::to_string(mdp.event_prob.cols()));
    if (!out.empty()) return out;

    for (int a = 0; a < num_a; ++a) {
        const MatrixXd& p = mdp.transitions[a];
        if (p.rows() != num_s || p.cols() != num_s) {
            out.push_back("transition slice for action " + std::to_string(a) + " has shape " +
                          std::to_string(p.rows()) + "x" + std::to_string(p.cols()));
            continue;
        }
        for (int s = 0; s < num_s; ++s) {
            double row_sum = 0.0;
            for (int sp = 0; sp < num_s; ++sp) {
                double v = p(s, sp);
                if (v < 0.0)
                    out.push_back("transition P[" + std::to_string(s) + "][" + std::to_string(a) + "][" +
                                  std::to_string(sp) + "] is negative: " + fmt(v));
                row_sum += v;
            }
            if (std::abs(row_sum - 1.0) > kStochasticTol)
                out.push_back("transition row " + std::to_string(s) + "," + std::to_string(a) + " sums to " +
                              fmt(row_sum));
        }
    }

    double init_sum = 0.0;
    for (int s = 0; s < num_s; ++s) {
        double v = mdp.initial_dist[s];
        if (v < 0.0) out.push_back("initial_dist[" + std::to_string(s) + "] is negative: " + fmt(v));
        init_sum += v;
    }
    if (std::abs(init_sum - 1.0) > kStochasticTol)
        out.push_back("initial_dist sums to " + fmt(init_sum));

    for (int s = 0; s < num_s; ++s)
        for (int a = 0; a < num_a; ++a) {
            double v = mdp.event_prob(s, a);
            if (v < 0.0 || v > 1.0)
                out.push_back("event_prob at (" + std::to_string(s) + "," + std::to_string(a) +
                              ") outside [0,1]: " + fmt(v));
        }

    if (!mdp.state_labels.empty() && int(mdp.state_labels.size()) != num_s)
        out.push_back("state_labels has " + std::to_string(mdp.state_labels.size()) + " entries");
    if (!mdp.action_labels.empty() && int(mdp.action_labels.size()) != num_a)
        out.push_back("action_labels has " + std::to_string(mdp.action_labels.size()) + " entries");

    return out;
}

void require_valid(const TabularMdp& mdp) {
    auto report = validate(mdp);
    if (report.empty()) return;
    std::ostringstream msg;
    msg << "invalid MDP:";
    for (const auto& line : report) msg << "\n  " << line;
    throw std::invalid_argument(msg.str());
}

TabularMdp apply_discount_transform(const TabularMdp& mdp, double gamma, const QueryType& query) {
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw std::invalid_argument("gamma must be in (0,1], got " + fmt(gamma));
    require_valid(mdp);

    const int num_s = mdp.num_states;
    const int absorb = num_s;
    TabularMdp out;
    out.num_states = num_s + 1;
    out.num_actions = mdp.num_actions;
    out.horizon = mdp.horizon;

    out.transitions.assign(mdp.num_actions, MatrixXd::Zero(num_s + 1, num_s + 1));
    for (int a = 0; a < mdp.num_actions; ++a) {
        out.transitions[a].topLeftCorner(num_s, num_s) = gamma * mdp.transitions[a];
        out.transitions[a].col(absorb).head(num_s).setConstant(1.0 - gamma);
        out.transitions[a](absorb, absorb) = 1.0;
    }

    out.initial_dist = VectorXd::Zero(num_s + 1);
    out.initial_dist.head(num_s) = mdp.initial_dist;

    out.event_prob = MatrixXd::Zero(num_s + 1, mdp.num_actions);
    out.event_prob.topRows(num_s) = mdp.event_prob;
    out.event_prob.row(absorb).setConstant(query.kind == QueryType::Kind::Any ? 0.0 : 1.0);

    if (!mdp.state_labels.empty()) {
        out.state_labels = mdp.state_labels;
        out.state_labels.push_back("absorbing");
    }
    out.action_labels = mdp.action_labels;
    return out;
}

MatrixXd event_probs_from_rewards(const MatrixXd& log_rewards) {
    if ((log_rewards.array() > 0.0).any())
        throw std::invalid_argument("rewards must be nonpositive to map to event probabilities");
    return log_rewards.array().exp();
}

TabularMdp random_mdp(std::uint64_t seed, const RandomMdpOptions& options) {
    Rng rng(seed);
    TabularMdp mdp;
    mdp.num_states = 1 + int(rng.next_double() * options.max_states);
    mdp.num_actions = 1 + int(rng.next_double() * options.max_actions);
    mdp.horizon = 1 + int(rng.next_double() * options.max_horizon);

    const int support = options.deterministic_dynamics
                            ? 1
                            : 1 + int(rng.next_double() * std::min(options.max_support, mdp.num_states));
    mdp.transitions.assign(mdp.num_actions, MatrixXd::Zero(mdp.num_states, mdp.num_states));
    for (int a = 0; a < mdp.num_actions; ++a)
        for (int s = 0; s < mdp.num_states; ++s) {
            double total = 0.0;
            for (int k = 0; k < support; ++k) {
                int sp = int(rng.next_double() * mdp.num_states);
                double w = 0.05 + rng.next_double();
                mdp.transitions[a](s, sp) += w;
                total += w;
            }
            mdp.transitions[a].row(s) /= total;
        }

    mdp.initial_dist = VectorXd::Zero(mdp.num_states);
    int inits = 1 + int(rng.next_double() * mdp.num_states);
    double total = 0.0;
    for (int k = 0; k < inits; ++k) {
        int s = int(rng.next_double() * mdp.num_states);
        double w = 0.05 + rng.next_double();
        mdp.initial_dist[s] += w;
        total += w;
    }
    mdp.initial_dist /= total;

    mdp.event_prob.resize(mdp.num_states, mdp.num_actions);
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < mdp.num_actions; ++a) {
            double p;
            if (options.binary_events)
                p = rng.next_double() < 0.35 ? 1.0 : 0.0;
            else
                p = options.min_event_prob + (1.0 - options.min_event_prob) * rng.next_double();
            mdp.event_prob(s, a) = p;
        }
    return mdp;
}

}  // namespace evc
