#include <fstream>
#include <map>

#include "doctest.h"
#include "json.hpp"
#include "lwsr/binary_io.hpp"
#include "lwsr/corpus.hpp"
#include "support.hpp"

using namespace lwsr;
using lwsr::testing::scratch_dir;

namespace {

void write_raw(const std::filesystem::path& p, std::uint32_t rows, std::uint32_t cols, std::size_t n_floats) {
    std::ofstream out(p, std::ios::binary);
    auto put = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    put(rows);
    put(cols);
    for (std::size_t i = 0; i < n_floats; ++i) put(0x3f800000u);  // 1.0f
}

nlohmann::json slide(const std::string& id, int task, int cls, const std::string& path) {
    return {{"slide_id", id}, {"task_id", task}, {"class_label", cls}, {"site_label", task}, {"path", path}};
}

// 2 tasks x 2 slides, d_f = 4.
nlohmann::json small_manifest(const std::filesystem::path& dir) {
    std::mt19937_64 rng(3);
    nlohmann::json slides = nlohmann::json::array();
    const char* ids[] = {"a", "b", "c", "d"};
    for (int i = 0; i < 4; ++i) {
        const std::string rel = std::string("f/") + ids[i] + ".bin";
        io::write_matrix_file(dir / rel, lwsr::testing::random_matrix_f(3, 4, rng));
        slides.push_back(slide(ids[i], i / 2, i / 2, rel));
    }
    return {{"d_f", 4}, {"task_order", {0, 1}}, {"slides", slides}};
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) { io::write_text_file(p, j.dump()); }

Errc load_error(const std::filesystem::path& p) {
    try {
        load_manifest(p);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected load_manifest to throw");
    return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("load_manifest reads a small two-task stream") {
    const auto dir = scratch_dir("corpus_small");
    write_json(dir / "m.json", small_manifest(dir));
    const TaskStream s = load_manifest(dir / "m.json");
    CHECK(s.num_tasks() == 2);
    CHECK(s.num_slides() == 4);
    CHECK(s.feature_dim == 4);
    CHECK(s.tasks[1].cubes[0].slide_id == "c");
    CHECK(s.tasks[1].class_set == std::set<int>{1});
    CHECK(s.tasks[0].cubes[1].features == io::read_matrix_file(dir / "f/b.bin"));
}

TEST_CASE("load_manifest names each failure") {
    const auto dir = scratch_dir("corpus_errors");

    SUBCASE("missing binary") {
        auto m = small_manifest(dir);
        m["slides"][2]["path"] = "f/nope.bin";
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::missing_file);
    }
    SUBCASE("missing manifest") { CHECK(load_error(dir / "absent.json") == Errc::missing_file); }
    SUBCASE("header 3x4 but only 10 floats") {
        auto m = small_manifest(dir);
        write_raw(dir / "f/short.bin", 3, 4, 10);
        m["slides"][0]["path"] = "f/short.bin";
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::dimension_mismatch);
    }
    SUBCASE("binary d_f disagrees with manifest") {
        auto m = small_manifest(dir);
        write_raw(dir / "f/wide.bin", 3, 5, 15);
        m["slides"][0]["path"] = "f/wide.bin";
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::dimension_mismatch);
    }
    SUBCASE("duplicate slide id") {
        auto m = small_manifest(dir);
        m["slides"][0]["slide_id"] = "s1";
        m["slides"][1]["slide_id"] = "s1";
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::duplicate_id);
    }
    SUBCASE("non-finite value") {
        auto m = small_manifest(dir);
        MatrixF bad(2, 4, 0.5f);
        bad(1, 2) = std::numeric_limits<float>::quiet_NaN();
        io::write_matrix_file(dir / "f/nan.bin", bad);
        m["slides"][3]["path"] = "f/nan.bin";
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::non_finite);
    }
    SUBCASE("class shared between tasks") {
        auto m = small_manifest(dir);
        m["slides"][2]["class_label"] = 0;
        write_json(dir / "m.json", m);
        CHECK(load_error(dir / "m.json") == Errc::invalid_stream);
    }
}

TEST_CASE("task_order renumbers tasks by arrival") {
    const auto dir = scratch_dir("corpus_order");
    auto m = small_manifest(dir);
    for (auto& s : m["slides"]) s["task_id"] = s["task_id"].get<int>() == 0 ? 7 : 3;
    m["task_order"] = {3, 7};
    write_json(dir / "m.json", m);
    const TaskStream s = load_manifest(dir / "m.json");
    CHECK(s.tasks[0].cubes[0].slide_id == "c");
    CHECK(s.tasks[0].cubes[0].task_id == 0);
    CHECK(s.tasks[1].cubes[0].slide_id == "a");
}

TEST_CASE("write_manifest then load_manifest reproduces feature bytes") {
    const auto dir = scratch_dir("corpus_roundtrip");
    SyntheticSpec spec;
    spec.num_tasks = 3;
    spec.slides_per_class = 4;
    spec.patches_per_slide = 5;
    spec.feature_dim = 6;
    spec.seed = 21;
    const TaskStream original = generate_synthetic_stream(spec);
    write_manifest(original, dir / "a" / "manifest.json");
    const TaskStream loaded = load_manifest(dir / "a" / "manifest.json");
    REQUIRE(loaded.num_tasks() == original.num_tasks());
    for (std::size_t t = 0; t < original.num_tasks(); ++t) {
        CHECK(loaded.tasks[t].cubes == original.tasks[t].cubes);
    }
    write_manifest(loaded, dir / "b" / "manifest.json");
    CHECK(io::read_text_file(dir / "a" / "manifest.json") == io::read_text_file(dir / "b" / "manifest.json"));
    CHECK(io::read_text_file(dir / "a" / "features" / "slide_000007.bin") ==
          io::read_text_file(dir / "b" / "features" / "slide_000007.bin"));
}

TEST_CASE("synthetic stream is deterministic and class-disjoint") {
    SyntheticSpec spec;
    spec.num_tasks = 4;
    spec.classes_per_task = 2;
    spec.slides_per_class = 3;
    spec.seed = 7;
    const TaskStream a = generate_synthetic_stream(spec);
    const TaskStream b = generate_synthetic_stream(spec);
    for (std::size_t t = 0; t < a.num_tasks(); ++t) CHECK(a.tasks[t].cubes == b.tasks[t].cubes);
    CHECK(a.all_classes() == std::set<int>{0, 1, 2, 3, 4, 5, 6, 7});

    spec.seed = 8;
    const TaskStream c = generate_synthetic_stream(spec);
    CHECK_FALSE(c.tasks[0].cubes[0].features == a.tasks[0].cubes[0].features);
}

TEST_CASE("property: random specs always yield valid disjoint streams") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> small(1, 4);
    for (int trial = 0; trial < 30; ++trial) {
        SyntheticSpec spec;
        spec.num_tasks = small(rng);
        spec.classes_per_task = small(rng);
        spec.sites_per_task = small(rng);
        spec.slides_per_class = small(rng);
        spec.patches_per_slide = small(rng);
        spec.feature_dim = small(rng) * 2;
        spec.seed = rng();
        const TaskStream s = generate_synthetic_stream(spec);
        CHECK_NOTHROW(validate_stream(s));
        CHECK(s.all_classes().size() == static_cast<std::size_t>(spec.num_tasks * spec.classes_per_task));
        std::set<int> seen;
        for (const auto& t : s.tasks) {
            for (int c : t.class_set) CHECK(seen.insert(c).second);
        }
    }
}

TEST_CASE("orthogonal prototypes sit exactly class_separation apart") {
    SyntheticSpec spec;
    spec.num_tasks = 4;
    spec.classes_per_task = 2;
    spec.feature_dim = 16;
    spec.class_separation = 3.0;
    const MatrixF p = synthetic_prototypes(spec);
    for (std::size_t i = 0; i < p.rows; ++i) {
        for (std::size_t j = i + 1; j < p.rows; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < p.cols; ++k) d += (p(i, k) - p(j, k)) * (p(i, k) - p(j, k));
            CHECK(std::sqrt(d) == doctest::Approx(3.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("Monte Carlo: slide means stay within 1.0 of their prototype") {
    // 1000 slides, separation 10, sigma 0.5.
    SyntheticSpec spec;
    spec.num_tasks = 5;
    spec.classes_per_task = 2;
    spec.slides_per_class = 100;
    spec.patches_per_slide = 16;
    spec.feature_dim = 16;
    spec.class_separation = 10.0;
    spec.patch_noise_sigma = 0.5;
    spec.seed = 5;
    const TaskStream s = generate_synthetic_stream(spec);
    const MatrixF protos = synthetic_prototypes(spec);
    std::size_t inside = 0, total = 0;
    for (const auto& t : s.tasks) {
        for (const auto& cube : t.cubes) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < cube.feature_dim(); ++k) {
                double mean = 0.0;
                for (std::size_t r = 0; r < cube.num_patches(); ++r) mean += cube.features(r, k);
                mean /= static_cast<double>(cube.num_patches());
                const double diff = mean - protos(static_cast<std::size_t>(cube.class_label), k);
                d2 += diff * diff;
            }
            inside += std::sqrt(d2) < 1.0 ? 1 : 0;
            ++total;
        }
    }
    CHECK(total == 1000);
    CHECK(static_cast<double>(inside) / static_cast<double>(total) > 0.99);
}

TEST_CASE("SyntheticSpec validation") {
    SyntheticSpec spec;
    spec.class_separation = 0.0;
    CHECK_THROWS_AS(generate_synthetic_stream(spec), Error);
    spec = {};
    spec.slides_per_class = 0;
    CHECK_THROWS_AS(generate_synthetic_stream(spec), Error);
}

TEST_CASE("sample_patches") {
    std::mt19937_64 data_rng(1);
    FeatureCube big = lwsr::testing::random_cube(4096, 3, data_rng, "big");
    big.class_label = 5;
    big.site_label = 2;
    big.task_id = 1;

    SUBCASE("fewer rows than requested is a no-op") {
        FeatureCube small = lwsr::testing::random_cube(100, 3, data_rng);
        Rng rng(1);
        CHECK(sample_patches(small, 2048, rng) == small);
    }
    SUBCASE("4096 rows down to 2048, all drawn from the original") {
        Rng rng(2);
        const FeatureCube out = sample_patches(big, 2048, rng);
        CHECK(out.num_patches() == 2048);
        CHECK(out.class_label == 5);
        CHECK(out.site_label == 2);
        CHECK(out.task_id == 1);
        // Multiset inclusion: rows are distinct with probability 1 here.
        std::map<std::vector<float>, int> pool;
        for (std::size_t r = 0; r < big.num_patches(); ++r) {
            auto row = big.features.row(r);
            pool[{row.begin(), row.end()}] += 1;
        }
        for (std::size_t r = 0; r < out.num_patches(); ++r) {
            auto row = out.features.row(r);
            auto it = pool.find({row.begin(), row.end()});
            REQUIRE(it != pool.end());
            CHECK(it->second > 0);
            it->second -= 1;
        }
    }
    SUBCASE("same rng state, same output") {
        Rng a(3), b(3);
        CHECK(sample_patches(big, 2048, a) == sample_patches(big, 2048, b));
    }
    SUBCASE("zero is rejected") {
        Rng rng(4);
        CHECK_THROWS_AS(sample_patches(big, 0, rng), Error);
    }
}

TEST_CASE("held-out split is seeded, per class, and never empties a class") {
    SyntheticSpec spec;
    spec.slides_per_class = 10;
    spec.patches_per_slide = 2;
    spec.feature_dim = 4;
    const TaskStream s = generate_synthetic_stream(spec);
    const HeldOutSplit a = make_split(s, 0.2, 17);
    const HeldOutSplit b = make_split(s, 0.2, 17);
    CHECK(a.test_ids == b.test_ids);
    CHECK(a.test_ids.size() == 8 * 2);
    const TaskStream train = training_view(s, a);
    CHECK(train.num_slides() == s.num_slides() - a.test_ids.size());
    for (const auto& t : train.tasks) CHECK(t.class_set.size() == 2);
}
