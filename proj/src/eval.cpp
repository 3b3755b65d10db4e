#include "maskplan/eval.hpp"

#include <fstream>

#include "maskplan/errors.hpp"
#include "maskplan/util.hpp"

namespace maskplan {

namespace {

SceneEval eval_scene(const Scene& scene, const Params& params, const Vocabulary& v,
                     const EvalOptions& opts, PlanMode mode, int draws) {
    SceneEval se;
    se.scene_seed = scene.seed;
    PromptInput prompt = encode_prompt(scene, params.cfg);
    Rng rng = Rng(opts.seed).fork("eval-scene", scene.seed);
    PlanResult res = plan(prompt, params, v, opts.pipeline, mode, draws,
                          mode == PlanMode::BestOf ? &rng : nullptr);
    se.selected = res.selected;
    se.best_post = 0.0;
    for (const auto& c : res.candidates) {
        CandidateEval ce;
        ce.goal_x = c.goal.x_token;
        ce.goal_y = c.goal.y_token;
        ce.goal_prob = c.goal.prob;
        ce.draw_index = c.draw_index;
        ce.pre = c.pre_edit;
        ce.post = c.post_edit;
        ce.pre_r = score(c.pre_edit, scene, opts.reward);
        ce.post_r = score(c.post_edit, scene, opts.reward);
        se.best_post = std::max(se.best_post, ce.post_r.aggregate);
        se.candidates.push_back(std::move(ce));
    }
    return se;
}

EvalReport eval_common(const std::vector<Scene>& scenes, const Params& params,
                       const Vocabulary& v, const EvalOptions& opts, PlanMode mode,
                       int draws, const char* mode_name) {
    EvalReport report;
    report.header = {{"type", "maskplan-eval"},
                     {"mode", mode_name},
                     {"pipeline", opts.pipeline.to_json()},
                     {"reward", opts.reward.to_json()},
                     {"seed", opts.seed},
                     {"draws", draws}};
    report.rows.resize(scenes.size());
    parallel_chunks(static_cast<int>(scenes.size()), opts.threads, [&](int, int begin, int end) {
        for (int i = begin; i < end; ++i)
            report.rows[i] = eval_scene(scenes[i], params, v, opts, mode, draws);
    });

    EvalAggregate agg;
    for (const auto& se : report.rows) {
        const CandidateEval& sel = se.candidates[se.selected];
        agg.mean_pre += sel.pre_r.aggregate;
        agg.mean_post += sel.post_r.aggregate;
        agg.mean_best += se.best_post;
        agg.mean_post_parts.nc += sel.post_r.nc;
        agg.mean_post_parts.dac += sel.post_r.dac;
        agg.mean_post_parts.ttc += sel.post_r.ttc;
        agg.mean_post_parts.comfort += sel.post_r.comfort;
        agg.mean_post_parts.ep += sel.post_r.ep;
        agg.mean_post_parts.aggregate += sel.post_r.aggregate;
    }
    agg.n = static_cast<int>(report.rows.size());
    if (agg.n > 0) {
        double inv = 1.0 / agg.n;
        agg.mean_pre *= inv;
        agg.mean_post *= inv;
        agg.mean_best *= inv;
        agg.mean_post_parts.nc *= inv;
        agg.mean_post_parts.dac *= inv;
        agg.mean_post_parts.ttc *= inv;
        agg.mean_post_parts.comfort *= inv;
        agg.mean_post_parts.ep *= inv;
        agg.mean_post_parts.aggregate *= inv;
    }
    report.agg = agg;
    return report;
}

}  // namespace

EvalReport eval_single(const std::vector<Scene>& scenes, const Params& params,
                       const Vocabulary& v, const EvalOptions& opts) {
    return eval_common(scenes, params, v, opts, PlanMode::Standard, 1, "single");
}

EvalReport eval_best_of(const std::vector<Scene>& scenes, const Params& params,
                        const Vocabulary& v, const EvalOptions& opts) {
    return eval_common(scenes, params, v, opts, PlanMode::BestOf, opts.best_of_draws, "best-of");
}

nlohmann::json trajectory_to_json(const Trajectory& t) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : t.points) pts.push_back({p.x, p.y});
    return {{"dt", t.dt}, {"points", pts}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
    Trajectory t;
    t.dt = j.at("dt").get<double>();
    const auto& pts = j.at("points");
    if (pts.size() != kWaypoints) throw IoError("trajectory: waypoint count");
    for (int k = 0; k < kWaypoints; ++k)
        t.points[k] = {pts[k][0].get<double>(), pts[k][1].get<double>()};
    return t;
}

nlohmann::json reward_to_json(const RewardBreakdown& r) {
    return {{"nc", r.nc},      {"dac", r.dac}, {"ttc", r.ttc},
            {"comfort", r.comfort}, {"ep", r.ep},   {"aggregate", r.aggregate}};
}

RewardBreakdown reward_from_json(const nlohmann::json& j) {
    RewardBreakdown r;
    r.nc = j.at("nc").get<double>();
    r.dac = j.at("dac").get<double>();
    r.ttc = j.at("ttc").get<double>();
    r.comfort = j.at("comfort").get<double>();
    r.ep = j.at("ep").get<double>();
    r.aggregate = j.at("aggregate").get<double>();
    return r;
}

void write_eval_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open report for writing: " + path);
    out << report.header.dump() << "\n";
    for (const auto& se : report.rows) {
        nlohmann::json cands = nlohmann::json::array();
        for (const auto& c : se.candidates) {
            cands.push_back({{"goal", {c.goal_x, c.goal_y}},
                             {"goal_prob", c.goal_prob},
                             {"draw", c.draw_index},
                             {"pre", trajectory_to_json(c.pre)},
                             {"post", trajectory_to_json(c.post)},
                             {"pre_reward", reward_to_json(c.pre_r)},
                             {"post_reward", reward_to_json(c.post_r)}});
        }
        out << nlohmann::json{{"scene", se.scene_seed},
                              {"selected", se.selected},
                              {"best_post", se.best_post},
                              {"candidates", cands}}
                   .dump()
            << "\n";
    }
    out << nlohmann::json{{"aggregate",
                           {{"mean_pre", report.agg.mean_pre},
                            {"mean_post", report.agg.mean_post},
                            {"mean_best", report.agg.mean_best},
                            {"post_parts", reward_to_json(report.agg.mean_post_parts)},
                            {"n", report.agg.n}}}}
               .dump()
        << "\n";
    if (!out) throw IoError("report write failed: " + path);
}

EvalReport read_eval_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report: " + path);
    EvalReport report;
    std::string line;
    int lineno = 0;
    auto parse = [&](const std::string& s) {
        try {
            return nlohmann::json::parse(s);
        } catch (const nlohmann::json::parse_error& e) {
            throw IoError("report parse error at line " + std::to_string(lineno) + ": " +
                          e.what());
        }
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = parse(line);
        if (lineno == 1) {
            if (j.value("type", "") != "maskplan-eval")
                throw IoError("report: bad header type at line 1");
            report.header = j;
        } else if (j.contains("aggregate")) {
            const auto& a = j.at("aggregate");
            report.agg.mean_pre = a.at("mean_pre").get<double>();
            report.agg.mean_post = a.at("mean_post").get<double>();
            report.agg.mean_best = a.at("mean_best").get<double>();
            report.agg.mean_post_parts = reward_from_json(a.at("post_parts"));
            report.agg.n = a.at("n").get<int>();
        } else {
            SceneEval se;
            se.scene_seed = j.at("scene").get<uint64_t>();
            se.selected = j.at("selected").get<int>();
            se.best_post = j.at("best_post").get<double>();
            for (const auto& c : j.at("candidates")) {
                CandidateEval ce;
                ce.goal_x = c.at("goal")[0].get<int32_t>();
                ce.goal_y = c.at("goal")[1].get<int32_t>();
                ce.goal_prob = c.at("goal_prob").get<double>();
                ce.draw_index = c.at("draw").get<int>();
                ce.pre = trajectory_from_json(c.at("pre"));
                ce.post = trajectory_from_json(c.at("post"));
                ce.pre_r = reward_from_json(c.at("pre_reward"));
                ce.post_r = reward_from_json(c.at("post_reward"));
                se.candidates.push_back(std::move(ce));
            }
            report.rows.push_back(std::move(se));
        }
    }
    return report;
}

}  // namespace maskplan
