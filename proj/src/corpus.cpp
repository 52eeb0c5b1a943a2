#include "lwsr/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_set>

#include "json.hpp"
#include "lwsr/binary_io.hpp"

namespace lwsr {

using nlohmann::json;

std::size_t TaskStream::num_slides() const {
    std::size_t n = 0;
    for (const auto& t : tasks) n += t.cubes.size();
    return n;
}

std::set<int> TaskStream::all_classes() const {
    std::set<int> out;
    for (const auto& t : tasks) out.insert(t.class_set.begin(), t.class_set.end());
    return out;
}

void SyntheticSpec::validate() const {
    auto positive = [](long long v, const char* name) {
        if (v < 1) throw Error(Errc::invalid_config, std::string(name) + " must be >= 1");
    };
    positive(num_tasks, "num_tasks");
    positive(classes_per_task, "classes_per_task");
    positive(sites_per_task, "sites_per_task");
    positive(slides_per_class, "slides_per_class");
    positive(patches_per_slide, "patches_per_slide");
    positive(feature_dim, "feature_dim");
    if (!(class_separation > 0.0)) throw Error(Errc::invalid_config, "class_separation must be > 0");
    if (!(patch_noise_sigma > 0.0)) throw Error(Errc::invalid_config, "patch_noise_sigma must be > 0");
}

void validate_stream(const TaskStream& stream) {
    if (stream.tasks.empty()) throw Error(Errc::invalid_stream, "stream has no tasks");
    std::unordered_set<std::string> ids;
    std::set<int> seen_classes;
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const auto& task = stream.tasks[t];
        if (task.task_id != static_cast<int>(t)) {
            throw Error(Errc::invalid_stream, "task ids must run 0..T-1 in order; got " + std::to_string(task.task_id) +
                                                  " at position " + std::to_string(t));
        }
        if (task.cubes.empty()) throw Error(Errc::invalid_stream, "task " + std::to_string(t) + " has no slides");
        std::set<int> classes, sites;
        for (const auto& cube : task.cubes) {
            if (cube.task_id != task.task_id) {
                throw Error(Errc::invalid_stream, "slide " + cube.slide_id + " carries the wrong task id");
            }
            if (cube.features.rows < 1) throw Error(Errc::dimension_mismatch, "slide " + cube.slide_id + " has no patches");
            if (cube.features.cols != stream.feature_dim) {
                throw Error(Errc::dimension_mismatch, "slide " + cube.slide_id + " has d_f=" +
                                                          std::to_string(cube.features.cols) + ", stream d_f=" +
                                                          std::to_string(stream.feature_dim));
            }
            if (!all_finite<float>(cube.features.data)) throw Error(Errc::non_finite, "slide " + cube.slide_id);
            if (!ids.insert(cube.slide_id).second) throw Error(Errc::duplicate_id, "slide_id " + cube.slide_id);
            classes.insert(cube.class_label);
            sites.insert(cube.site_label);
        }
        if (classes != task.class_set || sites != task.site_set) {
            throw Error(Errc::invalid_stream, "task " + std::to_string(t) + " label sets disagree with its slides");
        }
        for (int c : classes) {
            if (!seen_classes.insert(c).second) {
                throw Error(Errc::invalid_stream, "class " + std::to_string(c) + " appears in more than one task");
            }
        }
    }
}

TaskStream load_manifest(const std::filesystem::path& manifest_path) {
    json doc;
    try {
        doc = json::parse(io::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_stream, manifest_path.string() + ": " + e.what());
    }
    const auto base = manifest_path.parent_path();

    TaskStream stream;
    std::vector<int> order;
    try {
        stream.feature_dim = doc.at("d_f").get<std::size_t>();
        order = doc.at("task_order").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw Error(Errc::invalid_stream, manifest_path.string() + ": " + e.what());
    }
    std::map<int, int> position;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (!position.emplace(order[i], static_cast<int>(i)).second) {
            throw Error(Errc::invalid_stream, "task " + std::to_string(order[i]) + " listed twice in task_order");
        }
        TaskDataset task;
        task.task_id = static_cast<int>(i);
        stream.tasks.push_back(std::move(task));
    }

    std::unordered_set<std::string> ids;
    for (const auto& entry : doc.at("slides")) {
        FeatureCube cube;
        std::string rel;
        int raw_task = 0;
        try {
            cube.slide_id = entry.at("slide_id").get<std::string>();
            raw_task = entry.at("task_id").get<int>();
            cube.class_label = entry.at("class_label").get<int>();
            cube.site_label = entry.at("site_label").get<int>();
            rel = entry.at("path").get<std::string>();
        } catch (const json::exception& e) {
            throw Error(Errc::invalid_stream, manifest_path.string() + ": " + e.what());
        }
        if (!ids.insert(cube.slide_id).second) throw Error(Errc::duplicate_id, "slide_id " + cube.slide_id);
        auto pos = position.find(raw_task);
        if (pos == position.end()) {
            throw Error(Errc::invalid_stream, "slide " + cube.slide_id + " names task " + std::to_string(raw_task) +
                                                  " absent from task_order");
        }
        cube.task_id = pos->second;
        std::filesystem::path p(rel);
        cube.features = io::read_matrix_file(p.is_absolute() ? p : base / p);
        if (cube.features.cols != stream.feature_dim) {
            throw Error(Errc::dimension_mismatch, "slide " + cube.slide_id + ": binary d_f=" +
                                                      std::to_string(cube.features.cols) + ", manifest d_f=" +
                                                      std::to_string(stream.feature_dim));
        }
        auto& task = stream.tasks[static_cast<std::size_t>(cube.task_id)];
        task.class_set.insert(cube.class_label);
        task.site_set.insert(cube.site_label);
        task.cubes.push_back(std::move(cube));
    }
    validate_stream(stream);
    return stream;
}

void write_manifest(const TaskStream& stream, const std::filesystem::path& manifest_path) {
    validate_stream(stream);
    const auto base = manifest_path.parent_path();
    json doc;
    doc["format"] = "lwsr-manifest";
    doc["version"] = 1;
    doc["d_f"] = stream.feature_dim;
    std::vector<int> order(stream.tasks.size());
    std::iota(order.begin(), order.end(), 0);
    doc["task_order"] = order;
    json slides = json::array();
    std::size_t index = 0;
    for (const auto& task : stream.tasks) {
        for (const auto& cube : task.cubes) {
            char name[32];
            std::snprintf(name, sizeof name, "slide_%06zu.bin", index++);
            const std::string rel = std::string("features/") + name;
            io::write_matrix_file(base / rel, cube.features);
            slides.push_back({{"slide_id", cube.slide_id},
                              {"task_id", cube.task_id},
                              {"class_label", cube.class_label},
                              {"site_label", cube.site_label},
                              {"path", rel}});
        }
    }
    doc["slides"] = std::move(slides);
    io::write_text_file(manifest_path, doc.dump(2) + "\n");
}

MatrixF synthetic_prototypes(const SyntheticSpec& spec) {
    spec.validate();
    const auto total = static_cast<std::size_t>(spec.num_tasks) * static_cast<std::size_t>(spec.classes_per_task);
    const auto dim = static_cast<std::size_t>(spec.feature_dim);
    const double radius = spec.class_separation / std::sqrt(2.0);
    Rng rng(derive_seed(spec.seed, "synthetic/prototypes"));
    std::normal_distribution<double> normal(0.0, 1.0);

    MatrixD basis(total, dim);
    for (std::size_t c = 0; c < total; ++c) {
        auto v = basis.row(c);
        for (;;) {
            for (double& x : v) x = normal(rng);
            if (total <= dim) {
                // Gram-Schmidt against earlier prototypes.
                for (std::size_t p = 0; p < c; ++p) {
                    auto u = basis.row(p);
                    double dot = 0.0;
                    for (std::size_t k = 0; k < dim; ++k) dot += v[k] * u[k];
                    for (std::size_t k = 0; k < dim; ++k) v[k] -= dot * u[k];
                }
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-6) {
                for (double& x : v) x /= norm;
                break;
            }
        }
    }
    MatrixF out(total, dim);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = static_cast<float>(radius * basis.data[i]);
    return out;
}

TaskStream generate_synthetic_stream(const SyntheticSpec& spec) {
    const MatrixF prototypes = synthetic_prototypes(spec);
    Rng rng(derive_seed(spec.seed, "synthetic/slides"));
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.patch_noise_sigma));

    TaskStream stream;
    stream.feature_dim = static_cast<std::size_t>(spec.feature_dim);
    for (int t = 0; t < spec.num_tasks; ++t) {
        TaskDataset task;
        task.task_id = t;
        for (int k = 0; k < spec.classes_per_task; ++k) {
            const int cls = t * spec.classes_per_task + k;
            const int site = t * spec.sites_per_task + k % spec.sites_per_task;
            task.class_set.insert(cls);
            task.site_set.insert(site);
            const auto proto = prototypes.row(static_cast<std::size_t>(cls));
            for (int s = 0; s < spec.slides_per_class; ++s) {
                FeatureCube cube;
                char id[48];
                std::snprintf(id, sizeof id, "t%d_c%d_s%03d", t, cls, s);
                cube.slide_id = id;
                cube.task_id = t;
                cube.class_label = cls;
                cube.site_label = site;
                cube.features = MatrixF(static_cast<std::size_t>(spec.patches_per_slide), stream.feature_dim);
                for (std::size_t r = 0; r < cube.features.rows; ++r) {
                    auto row = cube.features.row(r);
                    for (std::size_t j = 0; j < row.size(); ++j) row[j] = proto[j] + noise(rng);
                }
                task.cubes.push_back(std::move(cube));
            }
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

FeatureCube sample_patches(const FeatureCube& cube, std::size_t n_sample, Rng& rng) {
    if (n_sample == 0) throw Error(Errc::invalid_argument, "n_sample must be >= 1");
    const std::size_t n = cube.features.rows;
    if (n <= n_sample) return cube;

    // Partial Fisher-Yates: the first n_sample slots become a uniform subset.
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n_sample; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n_sample);
    std::sort(idx.begin(), idx.end());

    FeatureCube out;
    out.slide_id = cube.slide_id;
    out.task_id = cube.task_id;
    out.class_label = cube.class_label;
    out.site_label = cube.site_label;
    out.features = MatrixF(n_sample, cube.features.cols);
    for (std::size_t i = 0; i < n_sample; ++i) {
        auto src = cube.features.row(idx[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
    }
    return out;
}

HeldOutSplit make_split(const TaskStream& stream, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw Error(Errc::invalid_argument, "test fraction must lie in [0, 1)");
    }
    std::map<int, std::vector<std::string>> by_class;
    for (const auto& task : stream.tasks) {
        for (const auto& cube : task.cubes) by_class[cube.class_label].push_back(cube.slide_id);
    }
    HeldOutSplit split;
    for (auto& [cls, ids] : by_class) {
        Rng rng(derive_seed(seed, "split/class/" + std::to_string(cls)));
        std::shuffle(ids.begin(), ids.end(), rng);
        auto take = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(ids.size())));
        if (test_fraction > 0.0 && ids.size() >= 2) take = std::clamp<std::size_t>(take, 1, ids.size() - 1);
        split.test_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return split;
}

TaskStream training_view(const TaskStream& stream, const HeldOutSplit& split) {
    TaskStream out;
    out.feature_dim = stream.feature_dim;
    for (const auto& task : stream.tasks) {
        TaskDataset t;
        t.task_id = task.task_id;
        for (const auto& cube : task.cubes) {
            if (split.is_test(cube.slide_id)) continue;
            t.class_set.insert(cube.class_label);
            t.site_set.insert(cube.site_label);
            t.cubes.push_back(cube);
        }
        out.tasks.push_back(std::move(t));
    }
    return out;
}

}  // namespace lwsr
