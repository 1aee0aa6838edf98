#include "gebd/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gebd {

using nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("malformed document in " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open file for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw Error("write failed: " + path);
}

double require_number(const json& j, const std::string& key, const std::string& ctx) {
    if (!j.contains(key) || !j[key].is_number())
        throw Error(ctx + ": missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

} // namespace

int AnnotatedVideo::frame_count() const {
    return static_cast<int>(std::lround(duration * fps));
}

std::vector<std::string> validate_config(const PipelineConfig& cfg) {
    std::vector<std::string> errors;
    auto fail = [&errors](const std::string& msg) { errors.push_back(msg); };

    if (cfg.m < 1) fail("m must be >= 1");
    if (cfg.n < 1) fail("n must be >= 1");
    if (cfg.L != cfg.m * cfg.n) fail("L != m*n");
    if (cfg.w < 0) fail("w must be >= 0");
    if (cfg.s < 1) fail("s must be >= 1");
    if (cfg.eval_stride < 1) fail("eval_stride must be >= 1");
    if (cfg.omega < 1) fail("omega must be >= 1");
    if (cfg.num_queries < 1) fail("num_queries must be >= 1");
    if (cfg.theta < 0.0 || cfg.theta > 1.0) fail("theta must be in [0,1]");
    if (cfg.window_len < 1) fail("window_len must be >= 1");
    if (cfg.window_stride < 0) fail("window_stride must be >= 0");
    if (cfg.feature_dim < 1) fail("feature_dim must be >= 1");
    if (cfg.heads < 1) fail("heads must be >= 1");
    if (cfg.heads >= 1 && cfg.feature_dim % cfg.heads != 0)
        fail("feature_dim must be divisible by heads");
    if (cfg.decoder_layers < 1) fail("decoder_layers must be >= 1");
    if (cfg.rel_dis_thresholds.empty()) fail("rel_dis_thresholds must be non-empty");
    for (std::size_t i = 0; i < cfg.rel_dis_thresholds.size(); ++i) {
        const double t = cfg.rel_dis_thresholds[i];
        if (t <= 0.0 || t > 1.0) {
            fail("rel_dis_thresholds must lie in (0,1]");
            break;
        }
    }
    for (std::size_t i = 1; i < cfg.rel_dis_thresholds.size(); ++i) {
        if (cfg.rel_dis_thresholds[i] <= cfg.rel_dis_thresholds[i - 1]) {
            fail("rel_dis_thresholds must be strictly increasing");
            break;
        }
    }
    if (cfg.lr_local <= 0.0) fail("lr_local must be > 0");
    if (cfg.lr_decoder <= 0.0) fail("lr_decoder must be > 0");
    if (cfg.batch_local < 1) fail("batch_local must be >= 1");
    if (cfg.batch_decoder < 1) fail("batch_decoder must be >= 1");
    if (cfg.weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (cfg.epochs_local < 0) fail("epochs_local must be >= 0");
    if (cfg.epochs_decoder < 0) fail("epochs_decoder must be >= 0");
    if (cfg.local_positive_radius < 0.0) fail("local_positive_radius must be >= 0 (0 = auto)");
    if (cfg.lambda_loc < 0.0) fail("lambda_loc must be >= 0");
    if (cfg.lambda_cls < 0.0) fail("lambda_cls must be >= 0");
    return errors;
}

namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["m"] = c.m;
    j["n"] = c.n;
    j["L"] = c.L;
    j["w"] = c.w;
    j["s"] = c.s;
    j["eval_stride"] = c.eval_stride;
    j["omega"] = c.omega;
    j["num_queries"] = c.num_queries;
    j["theta"] = c.theta;
    j["window_len"] = c.window_len;
    j["window_stride"] = c.window_stride;
    j["feature_dim"] = c.feature_dim;
    j["heads"] = c.heads;
    j["decoder_layers"] = c.decoder_layers;
    j["rel_dis_thresholds"] = c.rel_dis_thresholds;
    j["lr_local"] = c.lr_local;
    j["batch_local"] = c.batch_local;
    j["lr_decoder"] = c.lr_decoder;
    j["batch_decoder"] = c.batch_decoder;
    j["weight_decay"] = c.weight_decay;
    j["epochs_local"] = c.epochs_local;
    j["epochs_decoder"] = c.epochs_decoder;
    j["local_positive_radius"] = c.local_positive_radius;
    j["lambda_loc"] = c.lambda_loc;
    j["lambda_cls"] = c.lambda_cls;
    j["seed"] = c.seed;
    return j;
}

} // namespace

PipelineConfig load_config(const std::string& path, const PipelineConfig& base) {
    const json j = read_json_file(path);
    if (!j.is_object()) throw Error("config must be a flat key/value object: " + path);
    PipelineConfig c = base;
    bool l_given = false;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "m") c.m = value.get<int>();
            else if (key == "n") c.n = value.get<int>();
            else if (key == "L") { c.L = value.get<int>(); l_given = true; }
            else if (key == "w") c.w = value.get<int>();
            else if (key == "s") c.s = value.get<int>();
            else if (key == "eval_stride") c.eval_stride = value.get<int>();
            else if (key == "omega") c.omega = value.get<int>();
            else if (key == "num_queries") c.num_queries = value.get<int>();
            else if (key == "theta") c.theta = value.get<double>();
            else if (key == "window_len") c.window_len = value.get<int>();
            else if (key == "window_stride") c.window_stride = value.get<int>();
            else if (key == "feature_dim") c.feature_dim = value.get<int>();
            else if (key == "heads") c.heads = value.get<int>();
            else if (key == "decoder_layers") c.decoder_layers = value.get<int>();
            else if (key == "rel_dis_thresholds") c.rel_dis_thresholds = value.get<std::vector<double>>();
            else if (key == "lr_local") c.lr_local = value.get<double>();
            else if (key == "batch_local") c.batch_local = value.get<int>();
            else if (key == "lr_decoder") c.lr_decoder = value.get<double>();
            else if (key == "batch_decoder") c.batch_decoder = value.get<int>();
            else if (key == "weight_decay") c.weight_decay = value.get<double>();
            else if (key == "epochs_local") c.epochs_local = value.get<int>();
            else if (key == "epochs_decoder") c.epochs_decoder = value.get<int>();
            else if (key == "local_positive_radius") c.local_positive_radius = value.get<double>();
            else if (key == "lambda_loc") c.lambda_loc = value.get<double>();
            else if (key == "lambda_cls") c.lambda_cls = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw Error("unknown config key '" + key + "' in " + path);
        } catch (const json::exception& e) {
            throw Error("bad value for config key '" + key + "' in " + path + ": " + e.what());
        }
    }
    if (!l_given) c.L = c.m * c.n;
    return c;
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
    write_json_file(config_to_json(cfg), path);
}

std::vector<AnnotatedVideo> load_annotations(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_array()) throw Error("annotation file must be a top-level list: " + path);
    std::vector<AnnotatedVideo> out;
    out.reserve(j.size());
    for (const auto& rec : j) {
        AnnotatedVideo v;
        if (!rec.contains("id") || !rec["id"].is_string())
            throw Error("annotation record missing string field 'id'");
        v.id = rec["id"].get<std::string>();
        const std::string ctx = "annotation '" + v.id + "'";
        v.duration = require_number(rec, "duration", ctx);
        v.fps = require_number(rec, "fps", ctx);
        if (v.duration <= 0.0) throw Error(ctx + ": duration must be > 0");
        if (v.fps <= 0.0) throw Error(ctx + ": fps must be > 0");
        if (!rec.contains("boundaries") || !rec["boundaries"].is_array())
            throw Error(ctx + ": missing list field 'boundaries'");
        for (const auto& b : rec["boundaries"]) {
            if (!b.is_number()) throw Error(ctx + ": non-numeric boundary");
            v.boundaries.push_back(b.get<double>());
        }
        for (std::size_t i = 0; i < v.boundaries.size(); ++i) {
            const double b = v.boundaries[i];
            if (!(b > 0.0 && b < v.duration))
                throw Error(ctx + ": boundary " + std::to_string(b) +
                            " outside open interval (0, duration)");
            if (i > 0 && v.boundaries[i] <= v.boundaries[i - 1])
                throw Error(ctx + ": unsorted boundaries");
        }
        out.push_back(std::move(v));
    }
    return out;
}

void save_annotations(const std::vector<AnnotatedVideo>& videos, const std::string& path) {
    json arr = json::array();
    for (const auto& v : videos) {
        json rec;
        rec["id"] = v.id;
        rec["duration"] = v.duration;
        rec["fps"] = v.fps;
        rec["boundaries"] = v.boundaries;
        arr.push_back(std::move(rec));
    }
    write_json_file(arr, path);
}

void write_predictions(const PredictionMap& preds, const std::string& path) {
    json obj = json::object();
    for (const auto& [id, list] : preds) {
        json arr = json::array();
        for (const auto& p : list) {
            if (p.confidence < 0.0 || p.confidence > 1.0)
                throw Error("prediction for '" + id + "' has confidence outside [0,1]");
            arr.push_back({{"time", p.time}, {"confidence", p.confidence}});
        }
        obj[id] = std::move(arr);
    }
    write_json_file(obj, path);
}

PredictionMap load_predictions(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_object()) throw Error("prediction file must be a map from id to records: " + path);
    PredictionMap out;
    for (const auto& [id, list] : j.items()) {
        if (!list.is_array()) throw Error("predictions for '" + id + "' must be a list");
        std::vector<BoundaryPrediction> preds;
        for (const auto& rec : list) {
            BoundaryPrediction p;
            const std::string ctx = "prediction for '" + id + "'";
            p.time = require_number(rec, "time", ctx);
            p.confidence = require_number(rec, "confidence", ctx);
            if (!std::isfinite(p.time)) throw Error(ctx + ": non-finite time");
            if (p.confidence < 0.0 || p.confidence > 1.0)
                throw Error(ctx + ": confidence outside [0,1]");
            preds.push_back(p);
        }
        out.emplace(id, std::move(preds));
    }
    return out;
}

namespace {

json eval_row_to_json(double threshold, long long tp, long long fp, long long fn,
                      double precision, double recall, double f1) {
    json r;
    r["threshold"] = threshold;
    r["tp"] = tp;
    r["fp"] = fp;
    r["fn"] = fn;
    r["precision"] = precision;
    r["recall"] = recall;
    r["f1"] = f1;
    return r;
}

} // namespace

void write_report(const EvalReport& report, const std::string& path) {
    json j;
    json rows = json::array();
    for (const auto& r : report.thresholds)
        rows.push_back(eval_row_to_json(r.threshold, r.tp, r.fp, r.fn, r.precision, r.recall, r.f1));
    j["thresholds"] = std::move(rows);
    json pv = json::array();
    for (const auto& r : report.per_video) {
        json row = eval_row_to_json(r.threshold, r.tp, r.fp, r.fn, r.precision, r.recall, r.f1);
        row["id"] = r.id;
        pv.push_back(std::move(row));
    }
    j["per_video"] = std::move(pv);
    write_json_file(j, path);
}

EvalReport load_report(const std::string& path) {
    const json j = read_json_file(path);
    EvalReport rep;
    if (!j.contains("thresholds") || !j["thresholds"].is_array())
        throw Error("report missing 'thresholds' list: " + path);
    for (const auto& r : j["thresholds"]) {
        EvalThresholdRow row;
        row.threshold = require_number(r, "threshold", "report row");
        row.tp = r.at("tp").get<long long>();
        row.fp = r.at("fp").get<long long>();
        row.fn = r.at("fn").get<long long>();
        row.precision = require_number(r, "precision", "report row");
        row.recall = require_number(r, "recall", "report row");
        row.f1 = require_number(r, "f1", "report row");
        rep.thresholds.push_back(row);
    }
    if (j.contains("per_video")) {
        for (const auto& r : j["per_video"]) {
            EvalVideoRow row;
            row.id = r.at("id").get<std::string>();
            row.threshold = require_number(r, "threshold", "per-video row");
            row.tp = r.at("tp").get<long long>();
            row.fp = r.at("fp").get<long long>();
            row.fn = r.at("fn").get<long long>();
            row.precision = require_number(r, "precision", "per-video row");
            row.recall = require_number(r, "recall", "per-video row");
            row.f1 = require_number(r, "f1", "per-video row");
            rep.per_video.push_back(std::move(row));
        }
    }
    return rep;
}

} // namespace gebd
