#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "p2pflow/common.hpp"

namespace p2pflow {

struct PhaseLoad {
    double p = 0.0; // kW in physical form, per-unit after conversion
    double q = 0.0; // kVAr / per-unit
};

struct Bus {
    int id = 0;
    std::array<PhaseLoad, 3> load{}; // indexed by Phase
};

struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;            // ohm / per-unit
    double x = 0.0;            // ohm / per-unit
    double ampacity_a = 0.0;   // context only; 0 = unspecified
};

struct Bases {
    double s_kva = 0.0;
    double v_kv = 0.0;
    double z_ohm() const { return v_kv * v_kv * 1000.0 / s_kva; }
};

/// Per-phase load multipliers (a, b, c).
struct PhaseScaling {
    std::array<double, 3> factor{1.0, 1.0, 1.0};
};

/// Radial feeder model. Immutable by convention after construction; the
/// mutating operations below return modified copies.
struct GridModel {
    std::string name;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    int slack_id = 0;
    std::optional<Bases> bases; // set iff values are per-unit

    bool is_per_unit() const { return bases.has_value(); }

    int bus_index(int id) const; // throws on unknown id
    const Bus& bus(int id) const { return buses[bus_index(id)]; }
    bool has_bus(int id) const;

    /// Parent bus index per bus index (slack's parent is -1) and the index of
    /// the line connecting each bus to its parent. Derived from a BFS rooted
    /// at the slack; well-defined because the graph is radial.
    struct Topology {
        std::vector<int> parent;      // bus index -> parent bus index
        std::vector<int> parent_line; // bus index -> line index (-1 for slack)
        std::vector<int> bfs_order;   // bus indices, slack first
    };
    Topology topology() const;

    /// Validates all structural invariants; throws Error("netmodel", ...) on
    /// the first violation.
    void validate() const;

private:
    mutable std::unordered_map<int, int> index_cache_;
};

GridModel parse_grid(const std::string& text);
GridModel parse_grid_file(const std::string& path);
GridModel parse_grid_csv(const std::string& buses_csv, const std::string& lines_csv);
GridModel parse_grid_csv_files(const std::string& buses_path, const std::string& lines_path);

/// Field-exact JSON serialization; parse_grid(serialize_grid(g)) == g.
std::string serialize_grid(const GridModel& grid);

GridModel per_unit(const GridModel& grid, double s_base_kva, double v_base_kv);
GridModel to_physical(const GridModel& grid);

GridModel scale_phase_loads(const GridModel& grid, const PhaseScaling& scaling);

bool grids_equal(const GridModel& a, const GridModel& b);

} // namespace p2pflow
