#include "evc/gridworld.hpp"

#include <cstdio>
#include <map>

namespace evc {

GridWorldSpec default_gold_miner_spec() {
    GridWorldSpec spec;
    spec.width = 5;
    spec.height = 5;
    // Two vertical segments with staggered openings at (1,2) and (3,0); any
    // start-to-corner path must climb back up between them.
    spec.walls = {{1, 0}, {1, 1}, {1, 3}, {1, 4}, {3, 1}, {3, 2}, {3, 3}, {3, 4}};
    spec.start = {0, 0};
    spec.mines = {{{0, 0}, 0.1}, {{4, 4}, 1.0}};
    spec.horizon = 14;
    return spec;
}

GridWorldSpec reduced_gold_miner_spec() {
    GridWorldSpec spec;
    spec.width = 2;
    spec.height = 2;
    spec.start = {0, 0};
    spec.mines = {{{0, 0}, 0.1}, {{1, 1}, 1.0}};
    spec.horizon = 6;
    return spec;
}

TabularMdp build_gold_miner(const GridWorldSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw std::invalid_argument("grid dimensions must be positive");
    if (spec.horizon <= 0) throw std::invalid_argument("horizon must be positive");
    if (spec.walls.count(spec.start))
        throw std::invalid_argument("start cell is a wall");
    for (const auto& [cell, p] : spec.mines) {
        if (spec.walls.count(cell)) throw std::invalid_argument("mine cell is a wall");
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("mine probability outside [0,1]");
        if (cell.x < 0 || cell.x >= spec.width || cell.y < 0 || cell.y >= spec.height)
            throw std::invalid_argument("mine cell outside the grid");
    }
    for (const auto& w : spec.walls)
        if (w.x < 0 || w.x >= spec.width || w.y < 0 || w.y >= spec.height)
            throw std::invalid_argument("wall cell outside the grid");
    if (spec.start.x < 0 || spec.start.x >= spec.width || spec.start.y < 0 || spec.start.y >= spec.height)
        throw std::invalid_argument("start cell outside the grid");

    std::map<GridCell, int> index;
    std::vector<GridCell> cells;
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            GridCell c{x, y};
            if (spec.walls.count(c)) continue;
            index[c] = int(cells.size());
            cells.push_back(c);
        }

    const int num_s = int(cells.size());
    TabularMdp mdp;
    mdp.num_states = num_s;
    mdp.num_actions = kNumGridActions;
    mdp.horizon = spec.horizon;
    mdp.transitions.assign(kNumGridActions, MatrixXd::Zero(num_s, num_s));

    auto move = [&](GridCell c, int a) {
        GridCell n = c;
        switch (a) {
            case kUp: n.y -= 1; break;
            case kDown: n.y += 1; break;
            case kLeft: n.x -= 1; break;
            case kRight: n.x += 1; break;
            default: break;
        }
        bool inside = n.x >= 0 && n.x < spec.width && n.y >= 0 && n.y < spec.height;
        if (!inside || spec.walls.count(n)) return c;
        return n;
    };

    for (int s = 0; s < num_s; ++s)
        for (int a = 0; a < kNumGridActions; ++a)
            mdp.transitions[a](s, index.at(move(cells[s], a))) = 1.0;

    mdp.initial_dist = VectorXd::Zero(num_s);
    mdp.initial_dist[index.at(spec.start)] = 1.0;

    mdp.event_prob = MatrixXd::Zero(num_s, kNumGridActions);
    for (const auto& [cell, p] : spec.mines) mdp.event_prob.row(index.at(cell)).setConstant(p);

    mdp.state_labels.reserve(num_s);
    for (const auto& c : cells) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "(%d,%d)", c.x, c.y);
        mdp.state_labels.emplace_back(buf);
    }
    mdp.action_labels = {"up", "down", "left", "right", "stay"};
    return mdp;
}

std::optional<GridCell> parse_cell_label(const std::string& label) {
    GridCell c;
    char trailing = 0;
    if (std::sscanf(label.c_str(), "(%d,%d%c", &c.x, &c.y, &trailing) == 3 && trailing == ')')
        return c;
    return std::nullopt;
}

int state_index_of_cell(const TabularMdp& mdp, GridCell cell) {
    for (int s = 0; s < int(mdp.state_labels.size()); ++s) {
        auto c = parse_cell_label(mdp.state_labels[s]);
        if (c && *c == cell) return s;
    }
    return -1;
}

}  // namespace evc
