#include "lwsr/experiment.hpp"

#include <cstdio>
#include <iomanip>
#include <set>
#include <sstream>

#include "lwsr/binary_io.hpp"

namespace lwsr {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class FieldReader {
public:
    FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw Error(Errc::invalid_config, path_ + ": expected an object");
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        auto it = obj_.find(key);
        if (it == obj_.end()) return fallback;
        try {
            return it->template get<T>();
        } catch (const json::exception&) {
            throw Error(Errc::invalid_config, field(key) + ": wrong type");
        }
    }

    bool has(const std::string& key) const { return obj_.contains(key); }

    const json& child(const std::string& key) {
        used_.insert(key);
        return obj_.at(key);
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!used_.count(it.key())) throw Error(Errc::invalid_config, field(it.key()) + ": unknown field");
        }
    }

private:
    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

std::string format_double(double v, const char* fmt = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

void require(bool ok, const std::string& field) {
    if (!ok) throw Error(Errc::invalid_config, field + ": out of range");
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const json& doc) {
    FieldReader r(doc, "stream.synthetic");
    SyntheticSpec s;
    s.num_tasks = r.get("num_tasks", s.num_tasks);
    s.classes_per_task = r.get("classes_per_task", s.classes_per_task);
    s.sites_per_task = r.get("sites_per_task", s.sites_per_task);
    s.slides_per_class = r.get("slides_per_class", s.slides_per_class);
    s.patches_per_slide = r.get("patches_per_slide", s.patches_per_slide);
    s.feature_dim = r.get("feature_dim", s.feature_dim);
    s.class_separation = r.get("class_separation", s.class_separation);
    s.patch_noise_sigma = r.get("patch_noise_sigma", s.patch_noise_sigma);
    s.seed = r.get("seed", s.seed);
    r.finish();
    s.validate();
    return s;
}

json to_json(const SyntheticSpec& s) {
    return {{"num_tasks", s.num_tasks},
            {"classes_per_task", s.classes_per_task},
            {"sites_per_task", s.sites_per_task},
            {"slides_per_class", s.slides_per_class},
            {"patches_per_slide", s.patches_per_slide},
            {"feature_dim", s.feature_dim},
            {"class_separation", s.class_separation},
            {"patch_noise_sigma", s.patch_noise_sigma},
            {"seed", s.seed}};
}

void ExperimentConfig::validate() const {
    trainer.validate();
    require(test_fraction > 0.0 && test_fraction < 1.0, "metrics.test_fraction");
    require(metrics.recall_k >= 1, "metrics.recall_k");
    require(metrics.precision_k >= 1, "metrics.precision_k");
    if (const auto* spec = std::get_if<SyntheticSpec>(&stream)) spec->validate();
}

ExperimentConfig parse_experiment_config(const json& doc, const std::filesystem::path& base_dir) {
    FieldReader top(doc, "");
    ExperimentConfig c;
    c.seed = top.get<std::uint64_t>("seed", 0);
    c.trainer.seed = c.seed;
    c.trainer.mode = parse_mode(top.get<std::string>("mode", "lwsr"));
    if (auto out = top.get<std::string>("output_dir", ""); !out.empty()) c.output_dir = out;

    if (!top.has("stream")) throw Error(Errc::invalid_config, "stream: required");
    {
        const json& s = top.child("stream");
        FieldReader r(s, "stream");
        const bool manifest = r.has("manifest"), synthetic = r.has("synthetic");
        if (manifest == synthetic) throw Error(Errc::invalid_config, "stream: give exactly one of manifest, synthetic");
        if (manifest) {
            std::filesystem::path p = r.get<std::string>("manifest", "");
            c.stream = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
        } else {
            SyntheticSpec spec;
            spec.seed = derive_seed(c.seed, "synthetic");
            json sj = r.child("synthetic");
            if (!sj.contains("seed")) sj["seed"] = spec.seed;
            c.stream = parse_synthetic_spec(sj);
        }
        r.finish();
    }

    auto& t = c.trainer;
    if (top.has("hyperparameters")) {
        FieldReader r(top.child("hyperparameters"), "hyperparameters");
        t.patch_sample = r.get("patch_sampling_number_per_wsi", t.patch_sample);
        t.pairwise_weight = r.get("pair_wise_loss_weight", t.pairwise_weight);
        t.cross_entropy_weight = r.get("cross_entropy_loss_weight", t.cross_entropy_weight);
        t.alpha = r.get("distance_consistency_loss_weight", t.alpha);
        t.learning_rate = r.get("learning_rate", t.learning_rate);
        t.buffer_capacity = r.get("buffer_size", t.buffer_capacity);
        t.batch_size = r.get("batch_size", t.batch_size);
        t.replay_batch_size = r.get("minibatch_size", t.replay_batch_size);
        t.epochs_per_task = r.get("number_of_epochs", t.epochs_per_task);
        if (r.get<std::string>("optimizer", "adam") != "adam") {
            throw Error(Errc::invalid_config, "hyperparameters.optimizer: only adam is supported");
        }
        if (r.has("scheduler")) {
            FieldReader sr(r.child("scheduler"), "hyperparameters.scheduler");
            if (sr.get<std::string>("name", "steplr") != "steplr") {
                throw Error(Errc::invalid_config, "hyperparameters.scheduler.name: only steplr is supported");
            }
            t.scheduler_step = sr.get("step_size", t.scheduler_step);
            t.scheduler_gamma = sr.get("gamma", t.scheduler_gamma);
            sr.finish();
        }
        r.finish();
    }
    if (top.has("model")) {
        FieldReader r(top.child("model"), "model");
        t.hidden_dim = r.get("hidden_dim", t.hidden_dim);
        t.attention_dim = r.get("attention_dim", t.attention_dim);
        t.repr_dim = r.get("repr_dim", t.repr_dim);
        t.margin = r.get("margin", t.margin);
        t.resample_patches_each_epoch = r.get("resample_patches_each_epoch", t.resample_patches_each_epoch);
        t.replay_pairs_in_pairwise_loss = r.get("replay_pairs_in_pairwise_loss", t.replay_pairs_in_pairwise_loss);
        r.finish();
    }
    if (top.has("metrics")) {
        FieldReader r(top.child("metrics"), "metrics");
        c.test_fraction = r.get("test_fraction", c.test_fraction);
        c.metrics.recall_k = r.get("recall_k", c.metrics.recall_k);
        c.metrics.precision_k = r.get("precision_k", c.metrics.precision_k);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_config, path.string() + ": " + e.what());
    }
    return parse_experiment_config(doc, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
    const auto& t = c.trainer;
    json stream;
    if (const auto* p = std::get_if<std::filesystem::path>(&c.stream)) {
        stream["manifest"] = p->string();
    } else {
        stream["synthetic"] = to_json(std::get<SyntheticSpec>(c.stream));
    }
    json doc = {
        {"seed", c.seed},
        {"mode", std::string(mode_name(t.mode))},
        {"stream", stream},
        {"hyperparameters",
         {{"patch_sampling_number_per_wsi", t.patch_sample},
          {"pair_wise_loss_weight", t.pairwise_weight},
          {"cross_entropy_loss_weight", t.cross_entropy_weight},
          {"distance_consistency_loss_weight", t.alpha},
          {"learning_rate", t.learning_rate},
          {"buffer_size", t.buffer_capacity},
          {"batch_size", t.batch_size},
          {"minibatch_size", t.replay_batch_size},
          {"number_of_epochs", t.epochs_per_task},
          {"optimizer", "adam"},
          {"scheduler", {{"name", "steplr"}, {"step_size", t.scheduler_step}, {"gamma", t.scheduler_gamma}}}}},
        {"model",
         {{"hidden_dim", t.hidden_dim},
          {"attention_dim", t.attention_dim},
          {"repr_dim", t.repr_dim},
          {"margin", t.margin},
          {"resample_patches_each_epoch", t.resample_patches_each_epoch},
          {"replay_pairs_in_pairwise_loss", t.replay_pairs_in_pairwise_loss}}},
        {"metrics",
         {{"test_fraction", c.test_fraction},
          {"recall_k", c.metrics.recall_k},
          {"precision_k", c.metrics.precision_k}}},
    };
    return doc;
}

json to_json(const StageReport& r, TrainMode mode) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"stage", r.stage},
            {"mode", std::string(mode_name(mode))},
            {"num_queries", r.num_queries},
            {"database_size", r.database_size},
            {"queries_without_relevant", r.queries_without_relevant},
            {"mAP", r.map},
            {"r_at_3", r.r_at_3},
            {"p_at_5", r.p_at_5},
            {"site_map", r.site_map},
            {"site_r_at_3", r.site_r_at_3},
            {"site_p_at_5", r.site_p_at_5},
            {"src", opt(r.src)},
            {"krc", opt(r.krc)}};
}

json to_json(const ConsistencyTable& table) {
    json pairs = json::array();
    for (const auto& [key, rho] : table.rho) {
        pairs.push_back({{"i", key.first}, {"j", key.second}, {"rho", rho}, {"tau", table.tau.at(key)}});
    }
    return {{"num_stages", table.num_stages},
            {"pairs", pairs},
            {"src", aggregate_src(table)},
            {"krc", aggregate_krc(table)}};
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    if (const auto* p = std::get_if<std::filesystem::path>(&config.stream)) {
        result.stream = load_manifest(*p);
    } else {
        result.stream = generate_synthetic_stream(std::get<SyntheticSpec>(config.stream));
    }
    result.split = make_split(result.stream, config.test_fraction, derive_seed(config.seed, "split"));
    const TaskStream train = training_view(result.stream, result.split);
    result.run = run_stream(train, config.trainer);

    for (const auto& cp : result.run.checkpoints) {
        result.reports.push_back(stage_report(cp, result.stream, result.split, config.metrics));
    }
    if (result.run.checkpoints.size() >= 2) {
        result.consistency = consistency_evaluation(result.run.checkpoints, result.stream, result.split);
        result.reports.back().src = aggregate_src(*result.consistency);
        result.reports.back().krc = aggregate_krc(*result.consistency);
    }
    return result;
}

void write_run_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                       const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::write_text_file(dir / "status.json", json({{"status", "incomplete"}}).dump(2) + "\n");
    fs::remove(dir / "final_report.json");

    const TrainMode mode = config.trainer.mode;
    io::write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");

    for (const auto& cp : result.run.checkpoints) {
        write_checkpoint(cp.encoder.params(), dir / "checkpoints" / ("stage_" + std::to_string(cp.stage)));
    }
    std::ostringstream traj;
    traj << "stage,mAP,r_at_3,p_at_5,site_map,site_r_at_3,site_p_at_5\n";
    for (const auto& r : result.reports) {
        io::write_text_file(dir / "reports" / ("stage_" + std::to_string(r.stage) + ".json"),
                            to_json(r, mode).dump(2) + "\n");
        traj << r.stage << ',' << format_double(r.map) << ',' << format_double(r.r_at_3) << ','
             << format_double(r.p_at_5) << ',' << format_double(r.site_map) << ',' << format_double(r.site_r_at_3)
             << ',' << format_double(r.site_p_at_5) << '\n';
    }
    io::write_text_file(dir / "trajectory.csv", traj.str());
    if (result.consistency) {
        io::write_text_file(dir / "consistency.json", to_json(*result.consistency).dump(2) + "\n");
    }

    std::ostringstream log;
    log << "stage,epoch,learning_rate,pairwise,cross_entropy,distance_consistency,distance_consistency_raw,total,"
           "steps,replay_steps\n";
    for (const auto& e : result.run.log) {
        log << e.stage << ',' << e.epoch << ',' << format_double(e.learning_rate, "%.9g") << ','
            << format_double(e.pairwise, "%.9g") << ',' << format_double(e.cross_entropy, "%.9g") << ','
            << format_double(e.distance_consistency, "%.9g") << ','
            << format_double(e.distance_consistency_raw, "%.9g") << ',' << format_double(e.total, "%.9g") << ','
            << e.steps << ',' << e.replay_steps << '\n';
    }
    io::write_text_file(dir / "run_log.csv", log.str());

    json final_report = to_json(result.reports.back(), mode);
    final_report["config"] = to_json(config);
    io::write_text_file(dir / "final_report.json", final_report.dump(2) + "\n");
    io::write_text_file(dir / "status.json", json({{"status", "complete"}}).dump(2) + "\n");
}

const std::vector<std::string>& comparison_columns() {
    static const std::vector<std::string> cols{"mAP", "R@3", "P@5", "site mAP", "site R@3", "site P@5", "SRC", "KRC"};
    return cols;
}

std::vector<ComparisonRow> compare_runs(const std::vector<std::filesystem::path>& run_dirs) {
    static const std::vector<std::string> keys{"mAP",      "r_at_3",      "p_at_5", "site_map",
                                               "site_r_at_3", "site_p_at_5", "src",    "krc"};
    std::vector<ComparisonRow> rows;
    for (const auto& dir : run_dirs) {
        json status, report;
        try {
            status = json::parse(io::read_text_file(dir / "status.json"));
            report = json::parse(io::read_text_file(dir / "final_report.json"));
        } catch (const Error& e) {
            throw Error(Errc::invalid_state, dir.string() + ": not a completed run (" + e.what() + ")");
        } catch (const json::exception& e) {
            throw Error(Errc::invalid_state, dir.string() + ": unreadable report (" + e.what() + ")");
        }
        if (status.value("status", "") != "complete") throw Error(Errc::invalid_state, dir.string() + ": run incomplete");
        ComparisonRow row;
        row.run = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
        if (!report.contains("mode") || !report["mode"].is_string()) {
            throw Error(Errc::invalid_state, dir.string() + ": report lacks mode");
        }
        row.mode = report["mode"].get<std::string>();
        for (const auto& k : keys) {
            if (!report.contains(k)) throw Error(Errc::invalid_state, dir.string() + ": report lacks " + k);
            const json& v = report[k];
            if (v.is_null()) row.values.emplace_back(std::nullopt);
            else if (v.is_number()) row.values.emplace_back(v.get<double>());
            else throw Error(Errc::invalid_state, dir.string() + ": " + k + " is not numeric");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string comparison_text(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    std::size_t name_w = 3, mode_w = 4;
    for (const auto& r : rows) {
        name_w = std::max(name_w, r.run.size());
        mode_w = std::max(mode_w, r.mode.size());
    }
    out << std::left << std::setw(static_cast<int>(name_w)) << "run" << "  " << std::setw(static_cast<int>(mode_w))
        << "mode";
    for (const auto& c : comparison_columns()) out << "  " << std::right << std::setw(8) << c;
    out << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(name_w)) << r.run << "  " << std::setw(static_cast<int>(mode_w))
            << r.mode;
        for (const auto& v : r.values) out << "  " << std::right << std::setw(8) << (v ? format_double(*v, "%.3f") : "-");
        out << '\n';
    }
    return out.str();
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "run,mode";
    for (const auto& c : comparison_columns()) out << ',' << c;
    out << '\n';
    for (const auto& r : rows) {
        out << r.run << ',' << r.mode;
        for (const auto& v : r.values) out << ',' << (v ? format_double(*v) : "");
        out << '\n';
    }
    return out.str();
}

int cmd_gen(const std::filesystem::path& spec_path, const std::filesystem::path& manifest_path, std::ostream& out,
            std::ostream& err) {
    try {
        json doc;
        try {
            doc = json::parse(io::read_text_file(spec_path));
        } catch (const json::exception& e) {
            throw Error(Errc::invalid_config, spec_path.string() + ": " + e.what());
        }
        const SyntheticSpec spec = parse_synthetic_spec(doc);
        const TaskStream stream = generate_synthetic_stream(spec);
        write_manifest(stream, manifest_path);
        out << "wrote " << stream.num_slides() << " slides in " << stream.num_tasks() << " tasks to "
            << manifest_path.string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "lwsr gen: " << e.what() << '\n';
        return 1;
    }
}

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err) {
    try {
        ExperimentConfig config = load_experiment_config(config_path);
        if (overrides.seed) {
            config.seed = *overrides.seed;
            config.trainer.seed = *overrides.seed;
        }
        if (overrides.mode) config.trainer.mode = parse_mode(*overrides.mode);
        if (overrides.out) config.output_dir = *overrides.out;
        if (!config.output_dir) throw Error(Errc::invalid_config, "output_dir: required (or pass --out)");
        config.validate();

        const ExperimentResult result = run_experiment(config);
        write_run_outputs(result, config, *config.output_dir);
        for (const auto& r : result.reports) {
            if (r.queries_without_relevant > 0) {
                err << "warning: stage " << r.stage << ": " << r.queries_without_relevant
                    << " queries have no relevant slide in the database; scored as AP 0\n";
            }
        }
        const auto& last = result.reports.back();
        out << "mode=" << mode_name(config.trainer.mode) << " stages=" << result.reports.size()
            << " mAP=" << format_double(last.map, "%.4f") << " R@3=" << format_double(last.r_at_3, "%.4f")
            << " P@5=" << format_double(last.p_at_5, "%.4f");
        if (last.src) out << " SRC=" << format_double(*last.src, "%.4f") << " KRC=" << format_double(*last.krc, "%.4f");
        out << "\nwrote " << config.output_dir->string() << '\n';
        return 0;
    } catch (const std::exception& e) {
        err << "lwsr run: " << e.what() << '\n';
        return 1;
    }
}

int cmd_compare(const std::vector<std::filesystem::path>& run_dirs, const std::optional<std::filesystem::path>& csv_out,
                std::ostream& out, std::ostream& err) {
    try {
        if (run_dirs.size() < 2) throw Error(Errc::invalid_argument, "compare needs at least two run directories");
        const auto rows = compare_runs(run_dirs);
        out << comparison_text(rows);
        if (csv_out) io::write_text_file(*csv_out, comparison_csv(rows));
        return 0;
    } catch (const std::exception& e) {
        err << "lwsr compare: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace lwsr
