#pragma once

#include "evc/mdp.hpp"

#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace evc {

struct GridCell {
    int x = 0;
    int y = 0;
    auto operator<=>(const GridCell&) const = default;
};

/// The five grid actions, in index order.
enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
inline constexpr int kNumGridActions = 5;

/// Gold-miner style gridworld: deterministic movement (walking into a wall or
/// the boundary leaves the state unchanged), a point-mass start, and mines
/// that trigger the event with a fixed probability for every action taken on
/// their cell.
struct GridWorldSpec {
    int width = 0;
    int height = 0;
    std::set<GridCell> walls;
    GridCell start;
    std::vector<std::pair<GridCell, double>> mines;
    int horizon = 1;
};

/// Default domain: 5x5, start and the 10% low-yield mine in the top-left
/// corner, certain high-yield mine in the bottom-right corner, two wall
/// segments forcing a 4-step detour (shortest path 12 moves), horizon 14.
GridWorldSpec default_gold_miner_spec();

/// Reduced 2x2 instance used where sampled trajectories must discover the
/// high-yield mine from a uniform starting policy.
GridWorldSpec reduced_gold_miner_spec();

TabularMdp build_gold_miner(const GridWorldSpec& spec);

/// State labels produced by build_gold_miner are "(x,y)"; this recovers the
/// cell, or nullopt when the label is not of that form.
std::optional<GridCell> parse_cell_label(const std::string& label);

/// Index of the grid state carrying the given label cell, -1 when absent.
int state_index_of_cell(const TabularMdp& mdp, GridCell cell);

}  // namespace evc
