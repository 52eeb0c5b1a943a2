#include "lwsr/memory_bank.hpp"

#include <numeric>

#include "json.hpp"
#include "lwsr/binary_io.hpp"

namespace lwsr {

using nlohmann::json;

void MemoryBank::finalize_task(const FrozenEncoder& prev_encoder) {
    if (empty()) throw Error(Errc::invalid_state, "finalize_task on an empty memory bank");
    const auto& params = prev_encoder.params();
    const auto& items = exemplars();
    MatrixD reps(items.size(), params.dims().repr);
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto r = encode(params, items[i].features);
        std::copy(r.begin(), r.end(), reps.row(i).begin());
    }
    target_ = euclidean_distance_matrix(reps);
}

ReplayBatch MemoryBank::sample_replay(std::size_t k, Rng& rng) const {
    if (k == 0) throw Error(Errc::invalid_argument, "replay sample size must be >= 1");
    if (!target_) throw Error(Errc::invalid_state, "no target matrix; finalize_task has not run since the last update");
    const std::size_t n = size();
    k = std::min(k, n);

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);

    ReplayBatch batch;
    batch.bank_indices = idx;
    for (std::size_t i : idx) {
        batch.cubes.emplace_back(exemplars()[i]);
        batch.labels.push_back(exemplars()[i].class_label);
    }
    batch.target_submatrix = target_->submatrix(idx);
    return batch;
}

void MemoryBank::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json doc;
    doc["capacity"] = capacity();
    doc["seen"] = seen();
    json items = json::array();
    for (std::size_t i = 0; i < exemplars().size(); ++i) {
        const auto& cube = exemplars()[i];
        const std::string rel = "exemplar_" + std::to_string(i) + ".bin";
        io::write_matrix_file(dir / rel, cube.features);
        items.push_back({{"slide_id", cube.slide_id},
                         {"task_id", cube.task_id},
                         {"class_label", cube.class_label},
                         {"site_label", cube.site_label},
                         {"path", rel}});
    }
    doc["exemplars"] = std::move(items);
    doc["has_target_matrix"] = target_.has_value();
    if (target_) {
        MatrixF m(target_->side(), target_->side());
        for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<float>(target_->values().data[i]);
        io::write_matrix_file(dir / "target_matrix.bin", m);
    }
    io::write_text_file(dir / "bank.json", doc.dump(2) + "\n");
}

MemoryBank MemoryBank::load(const std::filesystem::path& dir) {
    const json doc = json::parse(io::read_text_file(dir / "bank.json"));
    MemoryBank bank(doc.at("capacity").get<std::size_t>());
    std::vector<FeatureCube> items;
    for (const auto& e : doc.at("exemplars")) {
        FeatureCube cube;
        cube.slide_id = e.at("slide_id").get<std::string>();
        cube.task_id = e.at("task_id").get<int>();
        cube.class_label = e.at("class_label").get<int>();
        cube.site_label = e.at("site_label").get<int>();
        cube.features = io::read_matrix_file(dir / e.at("path").get<std::string>());
        items.push_back(std::move(cube));
    }
    if (items.size() > bank.capacity()) throw Error(Errc::invalid_state, "bank holds more exemplars than its capacity");
    bank.reservoir_.restore(std::move(items), doc.at("seen").get<std::uint64_t>());
    if (doc.at("has_target_matrix").get<bool>()) {
        const MatrixF m = io::read_matrix_file(dir / "target_matrix.bin");
        if (m.rows != bank.size() || m.cols != bank.size()) {
            throw Error(Errc::dimension_mismatch, "target matrix side differs from exemplar count");
        }
        DistanceMatrix target(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) target(i, j) = m(i, j);
        }
        bank.target_ = std::move(target);
    }
    return bank;
}

}  // namespace lwsr
