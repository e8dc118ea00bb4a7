#include "evc/gridworld.hpp"
#include "evc/inference.hpp"
#include "evc/mdp_io.hpp"
#include "evc/oracle.hpp"
#include "evc/policy_opt.hpp"
#include "evc/vice.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace evc;

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitInvariant = 3;
constexpr int kExitToleranceExceeded = 4;
constexpr int kExitResource = 5;
constexpr int kExitModule = 6;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MdpFormatError(MdpFormatError::Kind::Syntax, path, "cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// No partial outputs: write to a temp file, rename once complete.
void atomic_write(const std::string& path, const std::string& contents) {
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
    }
    fs::rename(tmp, target);
}

struct CommonOpts {
    std::string mdp_path;
    std::string query = "all";
    int at_time = 0;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    int iters = 200;
    int batch = 500;
    double step = 0.25;
    double entropy = 1.0;
    std::string out;
    int jobs = 1;
    bool ascii = false;
};

QueryType parse_query(const CommonOpts& o) {
    if (o.query == "all") return QueryType::all();
    if (o.query == "any") return QueryType::any();
    if (o.query == "at") return QueryType::at(o.at_time);
    throw CLI::ValidationError("--query must be all|any|at");
}

void render_grid_policy(const TabularMdp& mdp, const PolicyTable& policy, bool ascii) {
    if (mdp.state_labels.empty() || mdp.num_actions != kNumGridActions) return;
    int width = 0, height = 0;
    std::vector<std::pair<GridCell, int>> cells;
    for (int s = 0; s < mdp.num_states; ++s) {
        auto c = parse_cell_label(mdp.state_labels[s]);
        if (!c) return;
        cells.emplace_back(*c, s);
        width = std::max(width, c->x + 1);
        height = std::max(height, c->y + 1);
    }
    const char* unicode[] = {"↑", "↓", "←", "→", "·"};
    const char* plain[] = {"^", "v", "<", ">", "."};
    const char** glyph = ascii ? plain : unicode;

    std::vector<std::vector<std::string>> grid(height, std::vector<std::string>(width, "#"));
    for (const auto& [c, s] : cells) {
        int a = 0;
        policy.pi[0].row(s).maxCoeff(&a);
        grid[c.y][c.x] = glyph[a];
    }
    std::cout << "greedy action per state at the first step:\n";
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) std::cout << grid[y][x] << ' ';
        std::cout << '\n';
    }
}

Json params_to_json(const SoftmaxPolicyParams& params) {
    Json doc;
    doc["time_varying"] = params.time_varying;
    doc["entropy_coeff"] = params.entropy_coeff;
    doc["logits"] = Json::array();
    for (const auto& slice : params.logits) {
        Json m = Json::array();
        for (int s = 0; s < slice.rows(); ++s) {
            Json row = Json::array();
            for (int a = 0; a < slice.cols(); ++a) row.push_back(slice(s, a));
            m.push_back(row);
        }
        doc["logits"].push_back(m);
    }
    return doc;
}

Json model_to_json(const EventModel& model) {
    Json doc;
    doc["offset"] = model.offset;
    doc["state_only"] = model.state_only;
    doc["logits"] = Json::array();
    for (int s = 0; s < model.logits.rows(); ++s) {
        Json row = Json::array();
        for (int a = 0; a < model.logits.cols(); ++a) row.push_back(model.logits(s, a));
        doc["logits"].push_back(row);
    }
    return doc;
}

std::string sibling_output(const std::string& out, const char* suffix) {
    fs::path p(out);
    p.replace_extension(suffix);
    return p.string();
}

int cmd_solve(const CommonOpts& o) {
    TabularMdp mdp = parse_mdp(read_file(o.mdp_path));
    QueryType query = parse_query(o);
    MessageTable msgs;
    switch (query.kind) {
        case QueryType::Kind::All: msgs = backward_all(mdp); break;
        case QueryType::Kind::Any: msgs = backward_any(mdp); break;
        case QueryType::Kind::At: msgs = backward_at(mdp, query.at_step); break;
    }
    PolicyTable policy = policy_from_messages(msgs);
    if (!o.out.empty()) atomic_write(o.out, serialize_solution(msgs, policy));
    render_grid_policy(mdp, policy, o.ascii);
    return kExitOk;
}

int cmd_sample(const CommonOpts& o, int n) {
    TabularMdp mdp = parse_mdp(read_file(o.mdp_path));
    SoftmaxPolicyParams uniform = SoftmaxPolicyParams::zeros(mdp);
    TrajectoryBatch batch = sample_trajectories(mdp, uniform, n, o.seed, o.jobs);
    Json doc;
    doc["seed"] = o.seed;
    doc["n"] = n;
    doc["trajectories"] = Json::array();
    for (int i = 0; i < batch.size(); ++i) {
        Json traj;
        traj["states"] = Json::array();
        traj["actions"] = Json::array();
        for (int t = 0; t < batch.horizon(); ++t) {
            traj["states"].push_back(batch.states(i, t));
            traj["actions"].push_back(batch.actions(i, t));
        }
        doc["trajectories"].push_back(traj);
    }
    if (!o.out.empty()) atomic_write(o.out, doc.dump(2) + "\n");
    return kExitOk;
}

int cmd_train(const CommonOpts& o) {
    TabularMdp mdp = parse_mdp(read_file(o.mdp_path));
    QueryType query = parse_query(o);
    TrainConfig config;
    config.iters = o.iters;
    config.batch_size = o.batch;
    config.step_size = o.step;
    config.gamma = o.gamma;
    config.seed = o.seed;
    config.entropy_coeff = o.entropy;
    config.jobs = o.jobs;
    TrainResult result = train_policy(mdp, query, config);
    if (!o.out.empty()) {
        atomic_write(o.out, result.log.to_csv());
        atomic_write(sibling_output(o.out, ".params.json"), params_to_json(result.params).dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_vice(const CommonOpts& o, const std::string& dataset_path, int disc_steps, double disc_step,
             const std::string& eval_mdp_path) {
    TabularMdp mdp = parse_mdp(read_file(o.mdp_path));
    QueryType query = parse_query(o);
    SuccessDataset dataset = parse_dataset(read_file(dataset_path), query);
    ViceConfig config;
    config.iters = o.iters;
    config.batch_size = o.batch;
    config.disc_steps = disc_steps;
    config.policy_step = o.step;
    config.disc_step = disc_step;
    config.gamma = o.gamma;
    config.seed = o.seed;
    config.entropy_coeff = o.entropy;
    config.jobs = o.jobs;
    if (!eval_mdp_path.empty()) config.eval_mdp = parse_mdp(read_file(eval_mdp_path));
    ViceResult result = vice_train(mdp, dataset, query, config);
    if (!o.out.empty()) {
        atomic_write(o.out, result.log.to_csv());
        atomic_write(sibling_output(o.out, ".model.json"), model_to_json(result.model).dump(2) + "\n");
        atomic_write(sibling_output(o.out, ".params.json"), params_to_json(result.params).dump(2) + "\n");
    }
    return kExitOk;
}

struct CheckRow {
    std::string name;
    double deviation;
    double tolerance;
};

int cmd_check(const CommonOpts& o, int count, const std::string& inject_fault) {
    std::vector<CheckRow> rows;

    auto oracle_deviation = [&](const TabularMdp& mdp, const QueryType& query, MessageTable msgs) {
        if (query.kind == QueryType::Kind::Any && inject_fault == "backward_any") msgs.q[0](0, 0) += 1e-6;
        double dev = 0.0;
        for (int t = 0; t < mdp.horizon; ++t)
            for (int s = 0; s < mdp.num_states; ++s)
                for (int a = 0; a < mdp.num_actions; ++a)
                    dev = std::max(dev, std::abs(std::exp(msgs.q[t](s, a)) -
                                                 exact_query_prob(mdp, query, t, s, a)));
        return dev;
    };

    double dev_all = 0.0, dev_any = 0.0, dev_at = 0.0;
    if (!o.mdp_path.empty()) {
        TabularMdp mdp = parse_mdp(read_file(o.mdp_path));
        // suffix enumeration must stay affordable: bound by the ceiling
        double paths = 1.0;
        for (int t = 0; t + 1 < mdp.horizon; ++t) paths *= double(mdp.num_actions) * mdp.num_states;
        if (paths > double(kDefaultEnumerationCeiling))
            throw EnumerationLimitError(long long(1e18), kDefaultEnumerationCeiling);
        dev_all = oracle_deviation(mdp, QueryType::all(), backward_all(mdp));
        dev_any = oracle_deviation(mdp, QueryType::any(), backward_any(mdp));
        dev_at = oracle_deviation(mdp, QueryType::at(mdp.horizon - 1), backward_at(mdp, mdp.horizon - 1));
    } else {
        for (int i = 0; i < count; ++i) {
            TabularMdp mdp = random_mdp(Rng::derive(o.seed, i));
            dev_all = std::max(dev_all, oracle_deviation(mdp, QueryType::all(), backward_all(mdp)));
            dev_any = std::max(dev_any, oracle_deviation(mdp, QueryType::any(), backward_any(mdp)));
            int t_star = mdp.horizon - 1;
            dev_at = std::max(dev_at, oracle_deviation(mdp, QueryType::at(t_star), backward_at(mdp, t_star)));
        }
    }
    rows.push_back({"backward_all", dev_all, 1e-10});
    rows.push_back({"backward_any", dev_any, 1e-10});
    rows.push_back({"backward_at", dev_at, 1e-10});

    // gradient checks on small random instances
    double dev_fd = 0.0, dev_est = 0.0;
    RandomMdpOptions small;
    small.max_states = 3;
    small.max_actions = 2;
    small.max_horizon = 3;
    small.min_event_prob = 0.05;
    for (int i = 0; i < 10; ++i) {
        TabularMdp mdp = random_mdp(Rng::derive(o.seed ^ 0xabcdef, i), small);
        SoftmaxPolicyParams params = SoftmaxPolicyParams::zeros(mdp);
        Rng jitter(Rng::derive(o.seed, 1000 + i));
        for (auto& slice : params.logits)
            for (int s = 0; s < slice.rows(); ++s)
                for (int a = 0; a < slice.cols(); ++a) slice(s, a) = jitter.next_double() - 0.5;
        for (QueryType q : {QueryType::all(), QueryType::any(), QueryType::at(mdp.horizon - 1)}) {
            LogitGrad exact = exact_policy_gradient(mdp, params, q);
            LogitGrad fd = finite_difference_gradient(mdp, params, q);
            LogitGrad est = expected_reinforce_gradient(mdp, params, q);
            for (size_t k = 0; k < exact.size(); ++k) {
                dev_fd = std::max(dev_fd, (exact[k] - fd[k]).cwiseAbs().maxCoeff());
                dev_est = std::max(dev_est, (exact[k] - est[k]).cwiseAbs().maxCoeff());
            }
        }
    }
    rows.push_back({"exact_policy_gradient_vs_fd", dev_fd, 1e-6});
    rows.push_back({"reinforce_estimator_expectation", dev_est, 1e-6});

    // discount consistency along sampled trajectories
    double dev_disc_all = 0.0, dev_disc_any = 0.0;
    RandomMdpOptions disc_opts;
    disc_opts.min_event_prob = 0.05;
    for (int i = 0; i < 5; ++i) {
        TabularMdp mdp = random_mdp(Rng::derive(o.seed ^ 0x5eed, i), disc_opts);
        SoftmaxPolicyParams uniform = SoftmaxPolicyParams::zeros(mdp);
        TrajectoryBatch batch = sample_trajectories(mdp, uniform, 20, Rng::derive(o.seed, 77 + i));
        std::vector<int> states(mdp.horizon), actions(mdp.horizon);
        for (double gamma : {0.5, 0.9, 0.99})
            for (int b = 0; b < batch.size(); ++b) {
                for (int t = 0; t < mdp.horizon; ++t) {
                    states[t] = batch.states(b, t);
                    actions[t] = batch.actions(b, t);
                }
                VectorXd all_rec = empirical_q_all(states, actions, mdp, gamma);
                VectorXd all_ref = discounted_q_branch_expectation(mdp, states, actions, gamma, QueryType::all());
                dev_disc_all = std::max(dev_disc_all, (all_rec - all_ref).cwiseAbs().maxCoeff());
                VectorXd any_rec = empirical_q_any(states, actions, mdp, gamma);
                VectorXd any_ref = discounted_q_branch_expectation(mdp, states, actions, gamma, QueryType::any());
                dev_disc_any = std::max(dev_disc_any, (any_rec - any_ref).cwiseAbs().maxCoeff());
            }
    }
    rows.push_back({"discount_consistency_all", dev_disc_all, 1e-9});
    rows.push_back({"discount_consistency_any", dev_disc_any, 1e-9});

    std::ostringstream csv;
    csv << "check,max_deviation,tolerance,pass\n";
    bool all_pass = true;
    for (const auto& row : rows) {
        bool pass = row.deviation < row.tolerance;
        all_pass = all_pass && pass;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%.3e,%.0e,%s\n", row.name.c_str(), row.deviation, row.tolerance,
                      pass ? "true" : "false");
        csv << buf;
        if (!pass) std::cerr << "check failed: " << row.name << " deviation " << row.deviation << "\n";
    }
    if (!o.out.empty()) atomic_write(o.out, csv.str());
    std::cout << csv.str();
    return all_pass ? kExitOk : kExitToleranceExceeded;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-based control toolkit: query solvers, policy-gradient training, "
                 "event-model learning and oracle cross-checks for tabular MDPs"};
    app.require_subcommand(1);

    CommonOpts o;
    int n = 100;
    int count = 30;
    int disc_steps = 10;
    double disc_step = 0.5;
    std::string dataset_path, eval_mdp_path, inject_fault;

    auto add_common = [&](CLI::App* cmd, bool needs_mdp = true) {
        auto* opt = cmd->add_option("--mdp", o.mdp_path, "MDP file");
        if (needs_mdp) opt->required();
        cmd->add_option("--query", o.query, "all|any|at")->check(CLI::IsMember({"all", "any", "at"}));
        cmd->add_option("--at-time", o.at_time, "step index for the AT query (0-based)");
        cmd->add_option("--gamma", o.gamma, "discount factor in (0,1]");
        cmd->add_option("--seed", o.seed, "random seed; the only source of randomness");
        cmd->add_option("--iters", o.iters, "training iterations");
        cmd->add_option("--batch", o.batch, "trajectories per iteration");
        cmd->add_option("--step", o.step, "gradient step size");
        cmd->add_option("--entropy", o.entropy, "entropy coefficient");
        cmd->add_option("--out", o.out, "output path");
        cmd->add_option("--jobs", o.jobs, "worker threads (deterministic merge)");
        cmd->add_flag("--ascii", o.ascii, "ASCII arrows instead of unicode");
    };

    auto* solve = app.add_subcommand("solve", "exact backward messages and posterior policy");
    add_common(solve);
    auto* sample = app.add_subcommand("sample", "sample trajectories under the uniform policy");
    add_common(sample);
    sample->add_option("--n", n, "number of trajectories");
    auto* train = app.add_subcommand("train", "policy-gradient training on the chosen query");
    add_common(train);
    auto* vice = app.add_subcommand("vice", "learn event probabilities from success examples");
    add_common(vice);
    vice->add_option("--dataset", dataset_path, "success-example file")->required();
    vice->add_option("--disc-steps", disc_steps, "discriminator steps per iteration");
    vice->add_option("--disc-step", disc_step, "discriminator step size");
    vice->add_option("--eval-mdp", eval_mdp_path, "MDP with true events for the task metric");
    auto* check = app.add_subcommand("check", "oracle-vs-solver verification suite");
    add_common(check, false);
    check->add_option("--count", count, "random instances in the suite");
    check->add_option("--inject-fault", inject_fault, "perturb a named solver (testing aid)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) return cmd_solve(o);
        if (sample->parsed()) return cmd_sample(o, n);
        if (train->parsed()) return cmd_train(o);
        if (vice->parsed()) return cmd_vice(o, dataset_path, disc_steps, disc_step, eval_mdp_path);
        if (check->parsed()) return cmd_check(o, count, inject_fault);
    } catch (const MdpFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == MdpFormatError::Kind::Invariant ? kExitInvariant : kExitParse;
    } catch (const EnumerationLimitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResource;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitModule;
    }
    return kExitOk;
}
