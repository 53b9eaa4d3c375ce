#include "p2pflow/netmodel.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace p2pflow {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw Error("netmodel", msg); }

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::array<PhaseLoad, 3> parse_load(const json& j) {
    std::array<PhaseLoad, 3> load{};
    const auto read3 = [&](const char* key, bool is_p) {
        if (!j.contains(key)) return;
        const json& v = j.at(key);
        if (v.is_array()) {
            if (v.size() != 3) fail(std::string(key) + " array must have 3 entries");
            for (int ph = 0; ph < 3; ++ph)
                (is_p ? load[ph].p : load[ph].q) = v[ph].get<double>();
        } else {
            for (int ph = 0; ph < 3; ++ph)
                (is_p ? load[ph].p : load[ph].q) = v.get<double>();
        }
    };
    read3("p_kw", true);
    read3("q_kvar", false);
    return load;
}

} // namespace

int GridModel::bus_index(int id) const {
    if (index_cache_.size() != buses.size()) {
        index_cache_.clear();
        for (size_t i = 0; i < buses.size(); ++i) index_cache_[buses[i].id] = static_cast<int>(i);
    }
    auto it = index_cache_.find(id);
    if (it == index_cache_.end()) fail("unknown bus id " + std::to_string(id));
    return it->second;
}

bool GridModel::has_bus(int id) const {
    for (const Bus& b : buses)
        if (b.id == id) return true;
    return false;
}

GridModel::Topology GridModel::topology() const {
    const int n = static_cast<int>(buses.size());
    std::vector<std::vector<std::pair<int, int>>> adj(n); // (neighbor bus idx, line idx)
    for (size_t li = 0; li < lines.size(); ++li) {
        int a = bus_index(lines[li].from);
        int b = bus_index(lines[li].to);
        adj[a].push_back({b, static_cast<int>(li)});
        adj[b].push_back({a, static_cast<int>(li)});
    }
    Topology topo;
    topo.parent.assign(n, -2);
    topo.parent_line.assign(n, -1);
    const int root = bus_index(slack_id);
    std::deque<int> queue{root};
    topo.parent[root] = -1;
    while (!queue.empty()) {
        int u = queue.front();
        queue.pop_front();
        topo.bfs_order.push_back(u);
        for (auto [v, li] : adj[u]) {
            if (topo.parent[v] == -2) {
                topo.parent[v] = u;
                topo.parent_line[v] = li;
                queue.push_back(v);
            }
        }
    }
    return topo;
}

void GridModel::validate() const {
    if (buses.empty()) fail("grid has no buses");
    {
        std::unordered_map<int, int> seen;
        for (const Bus& b : buses) {
            if (seen.count(b.id)) fail("duplicate bus id " + std::to_string(b.id));
            seen[b.id] = 1;
        }
        for (const Line& l : lines) {
            if (!seen.count(l.from)) fail("line endpoint references unknown bus " + std::to_string(l.from));
            if (!seen.count(l.to)) fail("line endpoint references unknown bus " + std::to_string(l.to));
            if (l.from == l.to) fail("line connects bus " + std::to_string(l.from) + " to itself");
            if (l.r < 0.0) fail("negative resistance on line " + std::to_string(l.from) + "-" + std::to_string(l.to));
            if (l.r + std::abs(l.x) <= 0.0)
                fail("zero impedance on line " + std::to_string(l.from) + "-" + std::to_string(l.to));
        }
        if (!seen.count(slack_id)) fail("missing slack bus " + std::to_string(slack_id));
    }
    if (lines.size() != buses.size() - 1)
        fail("non-radial topology: " + std::to_string(lines.size()) + " lines for " +
             std::to_string(buses.size()) + " buses");
    const Topology topo = topology();
    if (topo.bfs_order.size() != buses.size())
        fail("non-radial topology: graph is not connected");
    for (const PhaseLoad& ld : bus(slack_id).load)
        if (ld.p != 0.0 || ld.q != 0.0) fail("slack bus " + std::to_string(slack_id) + " must carry zero load");
}

GridModel parse_grid(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        fail(std::string("malformed grid file: ") + e.what());
    }
    GridModel grid;
    grid.name = j.value("name", "");
    if (!j.contains("slack")) fail("missing slack bus");
    grid.slack_id = j.at("slack").get<int>();
    if (!j.contains("buses") || !j.at("buses").is_array()) fail("missing buses array");
    for (const json& jb : j.at("buses")) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.load = parse_load(jb);
        grid.buses.push_back(b);
    }
    if (j.contains("lines")) {
        for (const json& jl : j.at("lines")) {
            Line l;
            l.from = jl.at("from").get<int>();
            l.to = jl.at("to").get<int>();
            l.r = jl.at("r_ohm").get<double>();
            l.x = jl.at("x_ohm").get<double>();
            l.ampacity_a = jl.value("ampacity_a", 0.0);
            grid.lines.push_back(l);
        }
    }
    if (j.contains("bases")) {
        Bases b;
        b.s_kva = j.at("bases").at("s_kva").get<double>();
        b.v_kv = j.at("bases").at("v_kv").get<double>();
        grid.bases = b;
    }
    grid.validate();
    return grid;
}

GridModel parse_grid_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open grid file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_grid(ss.str());
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            // trim
            size_t b = cell.find_first_not_of(" \t");
            size_t e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
        }
        rows.push_back(cells);
    }
    return rows;
}

int find_col(const std::vector<std::string>& header, const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

} // namespace

GridModel parse_grid_csv(const std::string& buses_csv, const std::string& lines_csv) {
    GridModel grid;
    const auto bus_rows = read_csv(buses_csv);
    if (bus_rows.size() < 2) fail("buses.csv needs a header and at least one row");
    const auto& bh = bus_rows[0];
    const int c_id = find_col(bh, "id");
    const int c_p = find_col(bh, "p_kw");
    const int c_q = find_col(bh, "q_kvar");
    const int c_slack = find_col(bh, "slack");
    if (c_id < 0 || c_p < 0 || c_q < 0) fail("buses.csv must have columns id,p_kw,q_kvar");
    bool slack_seen = false;
    for (size_t r = 1; r < bus_rows.size(); ++r) {
        const auto& row = bus_rows[r];
        Bus b;
        b.id = std::stoi(row.at(c_id));
        const double p = std::stod(row.at(c_p));
        const double q = std::stod(row.at(c_q));
        for (int ph = 0; ph < 3; ++ph) b.load[ph] = {p, q};
        grid.buses.push_back(b);
        if (c_slack >= 0 && static_cast<size_t>(c_slack) < row.size() && row[c_slack] == "1") {
            grid.slack_id = b.id;
            slack_seen = true;
        }
    }
    if (!slack_seen) fail("missing slack: buses.csv needs a slack column with one row set to 1");

    const auto line_rows = read_csv(lines_csv);
    if (line_rows.empty()) fail("lines.csv is empty");
    const auto& lh = line_rows[0];
    const int c_from = find_col(lh, "from");
    const int c_to = find_col(lh, "to");
    const int c_r = find_col(lh, "r_ohm");
    const int c_x = find_col(lh, "x_ohm");
    const int c_amp = find_col(lh, "ampacity_a");
    if (c_from < 0 || c_to < 0 || c_r < 0 || c_x < 0)
        fail("lines.csv must have columns from,to,r_ohm,x_ohm");
    for (size_t r = 1; r < line_rows.size(); ++r) {
        const auto& row = line_rows[r];
        Line l;
        l.from = std::stoi(row.at(c_from));
        l.to = std::stoi(row.at(c_to));
        l.r = std::stod(row.at(c_r));
        l.x = std::stod(row.at(c_x));
        if (c_amp >= 0 && static_cast<size_t>(c_amp) < row.size() && !row[c_amp].empty())
            l.ampacity_a = std::stod(row[c_amp]);
        grid.lines.push_back(l);
    }
    grid.validate();
    return grid;
}

GridModel parse_grid_csv_files(const std::string& buses_path, const std::string& lines_path) {
    const auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) fail("cannot open " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return parse_grid_csv(slurp(buses_path), slurp(lines_path));
}

std::string serialize_grid(const GridModel& grid) {
    std::ostringstream out;
    out << "{\n";
    if (!grid.name.empty()) out << "  \"name\": " << json(grid.name).dump() << ",\n";
    out << "  \"slack\": " << grid.slack_id << ",\n";
    if (grid.bases) {
        out << "  \"bases\": {\"s_kva\": " << fmt_double(grid.bases->s_kva)
            << ", \"v_kv\": " << fmt_double(grid.bases->v_kv) << "},\n";
    }
    out << "  \"buses\": [\n";
    for (size_t i = 0; i < grid.buses.size(); ++i) {
        const Bus& b = grid.buses[i];
        const bool uniform = b.load[0].p == b.load[1].p && b.load[1].p == b.load[2].p &&
                             b.load[0].q == b.load[1].q && b.load[1].q == b.load[2].q;
        out << "    {\"id\": " << b.id;
        if (uniform) {
            out << ", \"p_kw\": " << fmt_double(b.load[0].p)
                << ", \"q_kvar\": " << fmt_double(b.load[0].q);
        } else {
            out << ", \"p_kw\": [" << fmt_double(b.load[0].p) << ", " << fmt_double(b.load[1].p)
                << ", " << fmt_double(b.load[2].p) << "]"
                << ", \"q_kvar\": [" << fmt_double(b.load[0].q) << ", " << fmt_double(b.load[1].q)
                << ", " << fmt_double(b.load[2].q) << "]";
        }
        out << "}" << (i + 1 < grid.buses.size() ? "," : "") << "\n";
    }
    out << "  ],\n  \"lines\": [\n";
    for (size_t i = 0; i < grid.lines.size(); ++i) {
        const Line& l = grid.lines[i];
        out << "    {\"from\": " << l.from << ", \"to\": " << l.to
            << ", \"r_ohm\": " << fmt_double(l.r) << ", \"x_ohm\": " << fmt_double(l.x);
        if (l.ampacity_a != 0.0) out << ", \"ampacity_a\": " << fmt_double(l.ampacity_a);
        out << "}" << (i + 1 < grid.lines.size() ? "," : "") << "\n";
    }
    out << "  ]\n}\n";
    return out.str();
}

GridModel per_unit(const GridModel& grid, double s_base_kva, double v_base_kv) {
    if (s_base_kva <= 0.0) fail("s_base must be positive");
    if (v_base_kv <= 0.0) fail("v_base must be positive");
    if (grid.is_per_unit()) fail("grid already in per-unit");
    GridModel out = grid;
    Bases bases{s_base_kva, v_base_kv};
    const double z_base = bases.z_ohm();
    for (Line& l : out.lines) {
        l.r /= z_base;
        l.x /= z_base;
    }
    for (Bus& b : out.buses) {
        for (PhaseLoad& ld : b.load) {
            ld.p /= s_base_kva;
            ld.q /= s_base_kva;
        }
    }
    out.bases = bases;
    return out;
}

GridModel to_physical(const GridModel& grid) {
    if (!grid.is_per_unit()) fail("grid not in per-unit");
    GridModel out = grid;
    const double z_base = grid.bases->z_ohm();
    const double s_base = grid.bases->s_kva;
    for (Line& l : out.lines) {
        l.r *= z_base;
        l.x *= z_base;
    }
    for (Bus& b : out.buses) {
        for (PhaseLoad& ld : b.load) {
            ld.p *= s_base;
            ld.q *= s_base;
        }
    }
    out.bases.reset();
    return out;
}

GridModel scale_phase_loads(const GridModel& grid, const PhaseScaling& scaling) {
    for (double f : scaling.factor)
        if (f < 0.0) fail("negative phase scaling factor");
    GridModel out = grid;
    for (Bus& b : out.buses) {
        for (int ph = 0; ph < 3; ++ph) {
            b.load[ph].p *= scaling.factor[ph];
            b.load[ph].q *= scaling.factor[ph];
        }
    }
    return out;
}

bool grids_equal(const GridModel& a, const GridModel& b) {
    if (a.name != b.name || a.slack_id != b.slack_id) return false;
    if (a.bases.has_value() != b.bases.has_value()) return false;
    if (a.bases && (a.bases->s_kva != b.bases->s_kva || a.bases->v_kv != b.bases->v_kv)) return false;
    if (a.buses.size() != b.buses.size() || a.lines.size() != b.lines.size()) return false;
    for (size_t i = 0; i < a.buses.size(); ++i) {
        if (a.buses[i].id != b.buses[i].id) return false;
        for (int ph = 0; ph < 3; ++ph) {
            if (a.buses[i].load[ph].p != b.buses[i].load[ph].p) return false;
            if (a.buses[i].load[ph].q != b.buses[i].load[ph].q) return false;
        }
    }
    for (size_t i = 0; i < a.lines.size(); ++i) {
        const Line& la = a.lines[i];
        const Line& lb = b.lines[i];
        if (la.from != lb.from || la.to != lb.to || la.r != lb.r || la.x != lb.x ||
            la.ampacity_a != lb.ampacity_a)
            return false;
    }
    return true;
}

} // namespace p2pflow
