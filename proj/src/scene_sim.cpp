#include "maskplan/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "maskplan/errors.hpp"
#include "maskplan/rng.hpp"

namespace maskplan {

bool BevGrid::cell_of(Vec2 p, int& iy, int& ix) const {
    ix = static_cast<int>(std::floor((p.x - origin.x) / resolution));
    iy = static_cast<int>(std::floor((p.y - origin.y) / resolution));
    return in_bounds(iy, ix);
}

bool BevGrid::drivable_at_point(Vec2 p) const {
    int iy, ix;
    if (!cell_of(p, iy, ix)) return false;
    return at(iy, ix) != 0;
}

Pose Agent::pose_at(int k) const {
    if (states.empty()) return {};
    int i = std::clamp(k, 0, static_cast<int>(states.size()) - 1);
    return states[i];
}

Vec2 Agent::velocity_at(int k, double dt) const {
    if (states.size() < 2) return {0.0, 0.0};
    int i = std::clamp(k, 0, static_cast<int>(states.size()) - 2);
    Vec2 a = states[i].position(), b = states[i + 1].position();
    return (b - a) * (1.0 / dt);
}

OrientedRect Agent::rect_at(int k) const {
    Pose p = pose_at(k);
    return {{p.x, p.y}, p.yaw, length, width};
}

nlohmann::json SceneConfig::to_json() const {
    return {{"grid_height", grid_height},
            {"grid_width", grid_width},
            {"resolution", resolution},
            {"x_min", x_min},
            {"y_min", y_min},
            {"min_agents", min_agents},
            {"max_agents", max_agents},
            {"half_width_min", half_width_min},
            {"half_width_max", half_width_max},
            {"speed_min", speed_min},
            {"speed_max", speed_max},
            {"turn_speed_min", turn_speed_min},
            {"turn_speed_max", turn_speed_max},
            {"curvature_min", curvature_min},
            {"curvature_max", curvature_max},
            {"keep_lane_curvature", keep_lane_curvature},
            {"fork_prob", fork_prob},
            {"agent_state_steps", agent_state_steps},
            {"max_attempts", max_attempts}};
}

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
    SceneConfig c;
    c.grid_height = j.at("grid_height").get<int>();
    c.grid_width = j.at("grid_width").get<int>();
    c.resolution = j.at("resolution").get<double>();
    c.x_min = j.at("x_min").get<double>();
    c.y_min = j.at("y_min").get<double>();
    c.min_agents = j.at("min_agents").get<int>();
    c.max_agents = j.at("max_agents").get<int>();
    c.half_width_min = j.at("half_width_min").get<double>();
    c.half_width_max = j.at("half_width_max").get<double>();
    c.speed_min = j.at("speed_min").get<double>();
    c.speed_max = j.at("speed_max").get<double>();
    c.turn_speed_min = j.at("turn_speed_min").get<double>();
    c.turn_speed_max = j.at("turn_speed_max").get<double>();
    c.curvature_min = j.at("curvature_min").get<double>();
    c.curvature_max = j.at("curvature_max").get<double>();
    c.keep_lane_curvature = j.at("keep_lane_curvature").get<double>();
    c.fork_prob = j.at("fork_prob").get<double>();
    c.agent_state_steps = j.at("agent_state_steps").get<int>();
    c.max_attempts = j.at("max_attempts").get<int>();
    return c;
}

namespace {

constexpr double kEgoLength = 4.5;
constexpr double kEgoWidth = 2.0;
// Generator-side collision margin so default scorer footprints pass cleanly.
constexpr double kAgentClearance = 1.3;

struct Corridor {
    std::vector<Vec2> pts;
    std::vector<double> arcs;
    double half_width = 0.0;
};

// Unit-speed integration of a heading profile: straight for `lead_in` meters,
// then constant curvature (capped so corridors cannot spiral).
std::vector<Vec2> integrate_centerline(double lead_in, double curvature, double length,
                                       double step = 0.5) {
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(length / step) + 2);
    Vec2 p{0.0, 0.0};
    pts.push_back(p);
    for (double s = 0.0; s < length; s += step) {
        double h = (s < lead_in) ? 0.0 : curvature * (s - lead_in);
        h = std::clamp(h, -1.25, 1.25);
        p = p + Vec2{std::cos(h), std::sin(h)} * step;
        pts.push_back(p);
    }
    return pts;
}

double heading_at_arc(double lead_in, double curvature, double s) {
    double h = (s < lead_in) ? 0.0 : curvature * (s - lead_in);
    return std::clamp(h, -1.25, 1.25);
}

void rasterize_corridors(BevGrid& grid, const std::vector<Corridor>& corridors) {
    for (int iy = 0; iy < grid.height; ++iy) {
        for (int ix = 0; ix < grid.width; ++ix) {
            Vec2 c = grid.cell_center(iy, ix);
            uint8_t d = 0;
            for (const auto& cor : corridors) {
                if (distance_to_polyline(cor.pts, c) <= cor.half_width) {
                    d = 1;
                    break;
                }
            }
            grid.at(iy, ix) = d;
        }
    }
}

OrientedRect ego_rect(Vec2 pos, double heading, double inflate = 1.0) {
    return {pos, heading, kEgoLength * inflate, kEgoWidth * inflate};
}

bool agent_conflicts_with_expert(const Agent& agent, const Trajectory& expert) {
    auto headings = waypoint_headings(expert);
    // t = 0: ego at the origin, agent at its first state.
    OrientedRect start = ego_rect({0, 0}, 0.0, kAgentClearance);
    if (rects_overlap(start, agent.rect_at(0))) return true;
    for (int k = 0; k < kWaypoints; ++k) {
        OrientedRect ego = ego_rect(expert.points[k], headings[k], kAgentClearance);
        if (rects_overlap(ego, agent.rect_at(k + 1))) return true;
    }
    return false;
}

}  // namespace

Scene generate_scene(uint64_t seed, const SceneConfig& cfg, int* attempts_out) {
    if (cfg.grid_height < 4 || cfg.grid_width < 4 || cfg.resolution <= 0.0)
        throw ConfigError("generate_scene: degenerate grid config");
    if (cfg.half_width_min <= cfg.resolution)
        throw ConfigError("generate_scene: corridor narrower than one cell");

    Rng rng = Rng(seed).fork("scene");
    const double x_extent = cfg.grid_width * cfg.resolution;
    const double y_extent = cfg.grid_height * cfg.resolution;
    const double road_length = x_extent + 10.0;
    const double dt = 0.5;

    for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        Scene scene;
        scene.seed = seed;
        scene.instruction = static_cast<Instruction>(rng.uniform_int(0, 3));
        const bool is_turn = scene.instruction == Instruction::TurnLeft ||
                             scene.instruction == Instruction::TurnRight;

        double v0 = is_turn ? rng.uniform(cfg.turn_speed_min, cfg.turn_speed_max)
                            : rng.uniform(cfg.speed_min, cfg.speed_max);
        double accel = rng.uniform(-1.0, 1.0);
        double half_width = rng.uniform(cfg.half_width_min, cfg.half_width_max);

        // Discrete speed profile, bounded so comfort limits hold by construction.
        std::array<double, kWaypoints + 1> arc{};
        double s_acc = 0.0;
        for (int k = 0; k < kWaypoints; ++k) {
            double v = std::clamp(v0 + accel * (k + 0.5) * dt, 0.8, cfg.speed_max);
            s_acc += v * dt;
            arc[k + 1] = s_acc;
        }
        const double expert_total = arc[kWaypoints];

        double lead_in = 0.0, curvature = 0.0;
        switch (scene.instruction) {
            case Instruction::Straight:
                break;
            case Instruction::KeepLane:
                curvature = rng.uniform(-1.0, 1.0) *
                            std::min(cfg.keep_lane_curvature, 0.09 / std::max(expert_total, 1.0));
                break;
            case Instruction::TurnLeft:
                lead_in = rng.uniform(2.0, 5.0);
                curvature = rng.uniform(cfg.curvature_min, cfg.curvature_max);
                break;
            case Instruction::TurnRight:
                lead_in = rng.uniform(2.0, 5.0);
                curvature = -rng.uniform(cfg.curvature_min, cfg.curvature_max);
                break;
        }

        std::vector<Corridor> corridors;
        Corridor main;
        main.pts = integrate_centerline(lead_in, curvature, road_length);
        main.arcs = arc_lengths(main.pts);
        main.half_width = half_width;
        corridors.push_back(main);

        // Distractor branch: a junction alternative the instruction rules out.
        if (rng.bernoulli(cfg.fork_prob)) {
            Corridor fork;
            double fk;
            if (is_turn) {
                fk = 0.0;  // straight continuation past the turn
            } else {
                double sgn = rng.bernoulli(0.5) ? 1.0 : -1.0;
                fk = sgn * rng.uniform(cfg.curvature_min, cfg.curvature_max);
            }
            double fork_lead = is_turn ? lead_in : rng.uniform(3.0, 7.0);
            fork.pts = integrate_centerline(fork_lead, fk, road_length);
            fork.arcs = arc_lengths(fork.pts);
            fork.half_width = rng.uniform(cfg.half_width_min, cfg.half_width_max);
            corridors.push_back(fork);
        }

        // Instruction / geometry consistency over the expert horizon.
        double dh = heading_at_arc(lead_in, curvature, expert_total) -
                    heading_at_arc(lead_in, curvature, 0.0);
        bool consistent = true;
        switch (scene.instruction) {
            case Instruction::TurnLeft: consistent = dh >= 0.12; break;
            case Instruction::TurnRight: consistent = dh <= -0.12; break;
            default: consistent = std::abs(dh) <= 0.10; break;
        }
        if (!consistent) continue;

        scene.grid.height = cfg.grid_height;
        scene.grid.width = cfg.grid_width;
        scene.grid.resolution = cfg.resolution;
        scene.grid.origin = {cfg.x_min, cfg.y_min};
        scene.grid.drivable.assign(
            static_cast<size_t>(cfg.grid_height) * cfg.grid_width, 0);
        rasterize_corridors(scene.grid, corridors);

        for (int k = 0; k < kWaypoints; ++k)
            scene.expert.points[k] =
                point_at_arc(main.pts, main.arcs, arc[k + 1]);
        scene.expert.dt = dt;

        scene.ego.speed = v0;
        scene.ego.accel = accel;
        scene.ego.yaw_rate = heading_at_arc(lead_in, curvature, 0.5) / 0.5 * v0;

        bool ok = true;
        int oy, ox;
        if (!scene.grid.cell_of({0.0, 0.0}, oy, ox) || !scene.grid.at(oy, ox)) ok = false;
        for (int k = 0; ok && k < kWaypoints; ++k) {
            Vec2 p = scene.expert.points[k];
            if (std::abs(p.y) > 0.5 * y_extent - 1.0 || p.x > cfg.x_min + x_extent - 1.0)
                ok = false;
            else if (!scene.grid.drivable_at_point(p))
                ok = false;
        }
        if (!ok) continue;

        int n_agents = static_cast<int>(rng.uniform_int(cfg.min_agents, cfg.max_agents));
        const int n_states = std::max(cfg.agent_state_steps, kWaypoints + 2);
        for (int i = 0; i < n_agents; ++i) {
            bool placed = false;
            for (int trial = 0; trial < 12 && !placed; ++trial) {
                Agent a;
                a.length = rng.uniform(3.8, 5.2);
                a.width = rng.uniform(1.7, 2.2);
                a.states.resize(n_states);
                static const double weights[3] = {0.45, 0.30, 0.25};
                int kind = rng.choice(weights, 3);
                if (kind == 0) {
                    // Leader ahead on the main corridor, slower than the ego.
                    double s0 = expert_total + rng.uniform(6.0, 25.0);
                    double sp = rng.uniform(0.3, 0.85) * v0;
                    for (int j = 0; j < n_states; ++j) {
                        double s = s0 + sp * j * dt;
                        Vec2 p = point_at_arc(main.pts, main.arcs, s);
                        double h = heading_at_arc(lead_in, curvature, s);
                        a.states[j] = {p.x, p.y, h};
                    }
                } else if (kind == 1) {
                    // Static obstacle on the shoulder.
                    double s0 = rng.uniform(5.0, road_length - 15.0);
                    double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
                    double off = half_width + rng.uniform(0.8, 3.0);
                    Vec2 c = point_at_arc(main.pts, main.arcs, s0);
                    double h = heading_at_arc(lead_in, curvature, s0);
                    Vec2 n{-std::sin(h), std::cos(h)};
                    Vec2 p = c + n * (side * off);
                    for (int j = 0; j < n_states; ++j) a.states[j] = {p.x, p.y, h};
                } else {
                    // Crosser approaching the corridor from the side.
                    double s0 = rng.uniform(10.0, 45.0);
                    double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
                    double off = half_width + rng.uniform(1.5, 4.0);
                    double sp = rng.uniform(0.8, 2.2);
                    Vec2 c = point_at_arc(main.pts, main.arcs, s0);
                    double h = heading_at_arc(lead_in, curvature, s0);
                    Vec2 n{-std::sin(h), std::cos(h)};
                    Vec2 start = c + n * (side * off);
                    Vec2 vel = n * (-side * sp);
                    double ah = std::atan2(vel.y, vel.x);
                    for (int j = 0; j < n_states; ++j) {
                        Vec2 p = start + vel * (j * dt);
                        a.states[j] = {p.x, p.y, ah};
                    }
                }
                if (!agent_conflicts_with_expert(a, scene.expert)) {
                    scene.agents.push_back(std::move(a));
                    placed = true;
                }
            }
            // An unplaceable agent is dropped rather than failing the scene.
        }

        if (attempts_out) *attempts_out = attempt;
        return scene;
    }
    throw GenerationError("generate_scene: no feasible scene within attempt budget");
}

// ---- Distance transform ----------------------------------------------------

namespace {

constexpr double kEdtInf = 1e18;

// Felzenszwalb-Huttenlocher 1-D squared distance transform.
void dt1d(const double* f, int n, double* d, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kEdtInf;
    z[1] = kEdtInf;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + static_cast<double>(q) * q) -
                 (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
                (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kEdtInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

std::vector<double> outside_distance(const BevGrid& grid, double r_dac) {
    const int H = grid.height, W = grid.width;
    if (H <= 0 || W <= 0) throw ConfigError("outside_distance: empty grid");
    std::vector<double> sq(static_cast<size_t>(H) * W);
    for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix)
            sq[iy * W + ix] = grid.at(iy, ix) ? 0.0 : kEdtInf;

    const int n = std::max(H, W);
    std::vector<double> f(n), d(n), z(n + 1);
    std::vector<int> v(n);

    // Rows, then columns; squared distances stay exact integers.
    for (int iy = 0; iy < H; ++iy) {
        for (int ix = 0; ix < W; ++ix) f[ix] = sq[iy * W + ix];
        dt1d(f.data(), W, d.data(), v.data(), z.data());
        for (int ix = 0; ix < W; ++ix) sq[iy * W + ix] = d[ix];
    }
    for (int ix = 0; ix < W; ++ix) {
        for (int iy = 0; iy < H; ++iy) f[iy] = sq[iy * W + ix];
        dt1d(f.data(), H, d.data(), v.data(), z.data());
        for (int iy = 0; iy < H; ++iy) sq[iy * W + ix] = d[iy];
    }

    std::vector<double> out(sq.size());
    for (size_t i = 0; i < sq.size(); ++i) out[i] = r_dac * std::sqrt(sq[i]);
    return out;
}

CostField dac_cost_field(const BevGrid& grid, double r_dac, double eps_safe) {
    if (eps_safe < 0.0) throw ConfigError("dac_cost_field: eps_safe must be >= 0");
    CostField cf;
    cf.height = grid.height;
    cf.width = grid.width;
    cf.r_dac = r_dac;
    cf.eps_safe = eps_safe;
    cf.cost = outside_distance(grid, r_dac);
    for (double& c : cf.cost) c = std::max(0.0, c - eps_safe);
    return cf;
}

std::vector<double> raster_channels(const Scene& scene) {
    const int H = scene.grid.height, W = scene.grid.width;
    const size_t plane = static_cast<size_t>(H) * W;
    std::vector<double> out(3 * plane, 0.0);
    for (size_t i = 0; i < plane; ++i) out[i] = scene.grid.drivable[i];

    for (int frame = 0; frame < 2; ++frame) {
        double* ch = out.data() + (1 + frame) * plane;
        for (const auto& agent : scene.agents) {
            OrientedRect r = agent.rect_at(frame);
            // Bounding box in cells, then exact point-in-rect per center.
            double rad = 0.5 * std::hypot(r.length, r.width);
            int ix0, iy0, ix1, iy1;
            scene.grid.cell_of({r.center.x - rad, r.center.y - rad}, iy0, ix0);
            scene.grid.cell_of({r.center.x + rad, r.center.y + rad}, iy1, ix1);
            iy0 = std::clamp(iy0, 0, H - 1);
            ix0 = std::clamp(ix0, 0, W - 1);
            iy1 = std::clamp(iy1, 0, H - 1);
            ix1 = std::clamp(ix1, 0, W - 1);
            for (int iy = iy0; iy <= iy1; ++iy) {
                for (int ix = ix0; ix <= ix1; ++ix) {
                    Vec2 local = rotate(scene.grid.cell_center(iy, ix) - r.center, -r.heading);
                    if (std::abs(local.x) <= 0.5 * r.length && std::abs(local.y) <= 0.5 * r.width)
                        ch[iy * W + ix] = 1.0;
                }
            }
        }
    }
    return out;
}

// ---- Corpus I/O ------------------------------------------------------------

namespace {

nlohmann::json grid_to_json(const BevGrid& g) {
    std::vector<int> rle;
    size_t i = 0;
    const size_t n = g.drivable.size();
    while (i < n) {
        size_t j = i;
        while (j < n && g.drivable[j] == g.drivable[i]) ++j;
        rle.push_back(static_cast<int>(j - i));
        rle.push_back(g.drivable[i]);
        i = j;
    }
    return {{"h", g.height}, {"w", g.width}, {"res", g.resolution},
            {"ox", g.origin.x}, {"oy", g.origin.y}, {"rle", rle}};
}

BevGrid grid_from_json(const nlohmann::json& j) {
    BevGrid g;
    g.height = j.at("h").get<int>();
    g.width = j.at("w").get<int>();
    g.resolution = j.at("res").get<double>();
    g.origin = {j.at("ox").get<double>(), j.at("oy").get<double>()};
    g.drivable.reserve(static_cast<size_t>(g.height) * g.width);
    const auto& rle = j.at("rle");
    for (size_t i = 0; i + 1 < rle.size(); i += 2) {
        int count = rle[i].get<int>();
        auto value = static_cast<uint8_t>(rle[i + 1].get<int>());
        g.drivable.insert(g.drivable.end(), count, value);
    }
    if (g.drivable.size() != static_cast<size_t>(g.height) * g.width)
        throw IoError("corpus: grid RLE does not match dimensions");
    return g;
}

}  // namespace

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json agents = nlohmann::json::array();
    for (const auto& a : scene.agents) {
        nlohmann::json states = nlohmann::json::array();
        for (const auto& s : a.states) states.push_back({s.x, s.y, s.yaw});
        agents.push_back({{"len", a.length}, {"wid", a.width}, {"states", states}});
    }
    nlohmann::json expert = nlohmann::json::array();
    for (const auto& p : scene.expert.points) expert.push_back({p.x, p.y});
    return {{"seed", scene.seed},
            {"instr", static_cast<int>(scene.instruction)},
            {"ego", {scene.ego.speed, scene.ego.accel, scene.ego.yaw_rate}},
            {"dt", scene.expert.dt},
            {"expert", expert},
            {"grid", grid_to_json(scene.grid)},
            {"agents", agents}};
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene s;
    s.seed = j.at("seed").get<uint64_t>();
    s.instruction = static_cast<Instruction>(j.at("instr").get<int>());
    const auto& ego = j.at("ego");
    s.ego = {ego[0].get<double>(), ego[1].get<double>(), ego[2].get<double>()};
    s.expert.dt = j.at("dt").get<double>();
    const auto& expert = j.at("expert");
    if (expert.size() != kWaypoints) throw IoError("corpus: expert waypoint count");
    for (int k = 0; k < kWaypoints; ++k)
        s.expert.points[k] = {expert[k][0].get<double>(), expert[k][1].get<double>()};
    s.grid = grid_from_json(j.at("grid"));
    for (const auto& ja : j.at("agents")) {
        Agent a;
        a.length = ja.at("len").get<double>();
        a.width = ja.at("wid").get<double>();
        for (const auto& st : ja.at("states"))
            a.states.push_back({st[0].get<double>(), st[1].get<double>(), st[2].get<double>()});
        s.agents.push_back(std::move(a));
    }
    return s;
}

void write_corpus(const std::string& path, const CorpusHeader& header,
                  const std::vector<Scene>& scenes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open corpus file for writing: " + path);
    nlohmann::json h = {{"type", "maskplan-corpus"},
                        {"version", header.version},
                        {"config", header.config.to_json()},
                        {"base_seed", header.base_seed},
                        {"count", static_cast<int>(scenes.size())},
                        {"train_count", header.train_count},
                        {"test_count", header.test_count},
                        {"config_hash", header.config_hash}};
    out << h.dump() << "\n";
    for (const auto& s : scenes) out << scene_to_json(s).dump() << "\n";
    if (!out) throw IoError("corpus write failed: " + path);
}

std::vector<Scene> read_corpus(const std::string& path, CorpusHeader* header_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("corpus: missing header line");
    nlohmann::json h = nlohmann::json::parse(line);
    if (h.value("type", "") != "maskplan-corpus") throw IoError("corpus: bad header type");
    if (header_out) {
        header_out->version = h.at("version").get<int>();
        header_out->config = SceneConfig::from_json(h.at("config"));
        header_out->base_seed = h.at("base_seed").get<uint64_t>();
        header_out->count = h.at("count").get<int>();
        header_out->train_count = h.at("train_count").get<int>();
        header_out->test_count = h.at("test_count").get<int>();
        header_out->config_hash = h.at("config_hash").get<uint64_t>();
    }
    std::vector<Scene> scenes;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    }
    return scenes;
}

// ---- Scripted clips --------------------------------------------------------

EgoMotion relative_motion(const Pose& from, const Pose& to) {
    Vec2 d{to.x - from.x, to.y - from.y};
    EgoMotion m;
    m.translation = rotate(d, -from.yaw);
    double dyaw = to.yaw - from.yaw;
    while (dyaw > M_PI) dyaw -= 2.0 * M_PI;
    while (dyaw < -M_PI) dyaw += 2.0 * M_PI;
    m.yaw = dyaw;
    return m;
}

Clip generate_clip(uint64_t seed, const SceneConfig& cfg, int n_frames) {
    if (n_frames < 2) throw ConfigError("generate_clip: need at least 2 frames");
    Rng rng = Rng(seed).fork("clip");
    const double dt = 0.5;
    const double step = 0.5;

    // World-frame route: alternating straight and constant-curvature sections.
    const int total_steps = n_frames + kWaypoints + 2;
    double v0 = rng.uniform(3.0, 6.0);
    const double need = 7.0 * dt * total_steps + 80.0;
    std::vector<Vec2> route;
    std::vector<double> route_heading;
    Vec2 p{0.0, 0.0};
    double h = 0.0;
    route.push_back(p);
    route_heading.push_back(h);
    double s = 0.0;
    double section_left = rng.uniform(12.0, 25.0);
    double kappa = 0.0;
    while (s < need) {
        if (section_left <= 0.0) {
            section_left = rng.uniform(12.0, 28.0);
            kappa = (kappa == 0.0) ? rng.uniform(-0.035, 0.035) : 0.0;
        }
        h += kappa * step;
        p = p + Vec2{std::cos(h), std::sin(h)} * step;
        route.push_back(p);
        route_heading.push_back(h);
        s += step;
        section_left -= step;
    }
    auto route_arcs = arc_lengths(route);

    auto heading_at = [&](double arc) {
        size_t hi = std::upper_bound(route_arcs.begin(), route_arcs.end(), arc) - route_arcs.begin();
        hi = std::min(hi, route.size() - 1);
        return route_heading[hi == 0 ? 0 : hi - 1];
    };

    // Gentle piecewise-constant acceleration profile.
    std::vector<double> ego_arc(total_steps + 1, 0.0);
    std::vector<double> ego_speed(total_steps + 1, v0);
    std::vector<double> ego_accel(total_steps + 1, 0.0);
    double v = v0, a = rng.uniform(-0.6, 0.6);
    for (int j = 0; j < total_steps; ++j) {
        if (j % 8 == 7) a = rng.uniform(-0.6, 0.6);
        double vn = std::clamp(v + a * dt, 2.0, 7.0);
        ego_arc[j + 1] = ego_arc[j] + 0.5 * (v + vn) * dt;
        v = vn;
        ego_speed[j + 1] = v;
        ego_accel[j + 1] = a;
        ego_accel[j] = a;
    }

    // World-frame traffic: leaders placed so the scripted ego never closes in.
    int n_agents = static_cast<int>(rng.uniform_int(cfg.min_agents, cfg.max_agents));
    struct WorldAgent {
        double length, width;
        std::vector<Pose> states;
    };
    std::vector<WorldAgent> world_agents;
    const double clip_time = total_steps * dt;
    for (int i = 0; i < n_agents; ++i) {
        WorldAgent wa;
        wa.length = rng.uniform(3.8, 5.2);
        wa.width = rng.uniform(1.7, 2.2);
        wa.states.resize(total_steps + 1);
        if (rng.bernoulli(0.6)) {
            double sp = rng.uniform(0.3, 0.85) * v0;
            double gap = rng.uniform(12.0, 25.0) + std::max(0.0, (7.0 - sp)) * clip_time;
            for (int j = 0; j <= total_steps; ++j) {
                double sa = ego_arc[0] + gap + sp * j * dt + ego_arc[total_steps];
                Vec2 q = point_at_arc(route, route_arcs, sa);
                wa.states[j] = {q.x, q.y, heading_at(sa)};
            }
        } else {
            double s0 = rng.uniform(10.0, need - 20.0);
            double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
            double off = cfg.half_width_max + rng.uniform(1.0, 3.0);
            Vec2 c = point_at_arc(route, route_arcs, s0);
            double rh = heading_at(s0);
            Vec2 nrm{-std::sin(rh), std::cos(rh)};
            Vec2 q = c + nrm * (side * off);
            for (int j = 0; j <= total_steps; ++j) wa.states[j] = {q.x, q.y, rh};
        }
        world_agents.push_back(std::move(wa));
    }

    double half_width = rng.uniform(cfg.half_width_min, cfg.half_width_max);

    Clip clip;
    clip.dt = dt;
    for (int f = 0; f < n_frames; ++f) {
        Pose ego_pose;
        Vec2 ep = point_at_arc(route, route_arcs, ego_arc[f]);
        ego_pose = {ep.x, ep.y, heading_at(ego_arc[f])};
        clip.ego_poses.push_back(ego_pose);

        auto to_ego = [&](Vec2 w) { return rotate(w - ep, -ego_pose.yaw); };

        Scene scene;
        scene.seed = seed * 1000 + static_cast<uint64_t>(f);
        scene.grid.height = cfg.grid_height;
        scene.grid.width = cfg.grid_width;
        scene.grid.resolution = cfg.resolution;
        scene.grid.origin = {cfg.x_min, cfg.y_min};
        scene.grid.drivable.assign(
            static_cast<size_t>(cfg.grid_height) * cfg.grid_width, 0);

        // Route slice around the ego, in ego frame.
        Corridor cor;
        cor.half_width = half_width;
        double lo = std::max(0.0, ego_arc[f] - 15.0);
        double hi = ego_arc[f] + cfg.grid_width * cfg.resolution + 15.0;
        for (size_t i = 0; i < route.size(); ++i) {
            if (route_arcs[i] < lo || route_arcs[i] > hi) continue;
            cor.pts.push_back(to_ego(route[i]));
        }
        cor.arcs = arc_lengths(cor.pts);
        rasterize_corridors(scene.grid, {cor});

        for (int k = 0; k < kWaypoints; ++k) {
            Vec2 w = point_at_arc(route, route_arcs, ego_arc[f + k + 1]);
            scene.expert.points[k] = to_ego(w);
        }
        scene.expert.dt = dt;

        scene.ego.speed = ego_speed[f];
        scene.ego.accel = ego_accel[f];
        double kloc = (heading_at(ego_arc[f] + 1.0) - ego_pose.yaw) / 1.0;
        scene.ego.yaw_rate = kloc * ego_speed[f];

        double dh = heading_at(ego_arc[f] + ego_speed[f] * 4.0) - ego_pose.yaw;
        if (dh >= 0.12)
            scene.instruction = Instruction::TurnLeft;
        else if (dh <= -0.12)
            scene.instruction = Instruction::TurnRight;
        else
            scene.instruction = Instruction::KeepLane;

        for (const auto& wa : world_agents) {
            Agent a;
            a.length = wa.length;
            a.width = wa.width;
            int n_local = std::max(cfg.agent_state_steps, kWaypoints + 2);
            for (int j = 0; j < n_local; ++j) {
                int g = std::min(f + j, total_steps);
                Vec2 q = to_ego(wa.states[g].position());
                a.states.push_back({q.x, q.y, wa.states[g].yaw - ego_pose.yaw});
            }
            scene.agents.push_back(std::move(a));
        }

        clip.frames.push_back(std::move(scene));
    }
    return clip;
}

}  // namespace maskplan
