#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "rfs/synthdata.hpp"

using namespace rfs;

TEST_CASE("dataset generation is deterministic in the seed") {
    const Dataset a = generate_dataset(6, 5, 3, 8, 42, 0.1);
    const Dataset b = generate_dataset(6, 5, 3, 8, 42, 0.1);
    REQUIRE(a.train.images.size() == b.train.images.size());
    for (std::size_t i = 0; i < a.train.images.size(); ++i)
        CHECK(a.train.images[i].pixels == b.train.images[i].pixels);
    for (std::size_t i = 0; i < a.test.images.size(); ++i)
        CHECK(a.test.images[i].pixels == b.test.images[i].pixels);
    CHECK(a.train.labels == b.train.labels);

    const Dataset c = generate_dataset(6, 5, 3, 8, 43, 0.1);
    CHECK(a.train.images[0].pixels != c.train.images[0].pixels);
}

TEST_CASE("zero noise collapses each class to its template") {
    const Dataset ds = generate_dataset(4, 6, 2, 8, 1, 0.0);
    for (int k = 0; k < 4; ++k) {
        const Image* first = nullptr;
        for (std::size_t i = 0; i < ds.train.images.size(); ++i) {
            if (ds.train.labels[i] != k) continue;
            if (!first) first = &ds.train.images[i];
            CHECK(ds.train.images[i].pixels == first->pixels);
        }
    }
}

TEST_CASE("pixels stay inside the unit interval") {
    const Dataset ds = generate_dataset(8, 10, 2, 8, 9, 0.5);
    for (const Image& img : ds.train.images)
        for (double p : img.pixels) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
}

TEST_CASE("class count beyond the parameter grid is rejected") {
    CHECK_THROWS_AS(generate_dataset(dataset_capacity() + 1, 2, 1, 8, 0), CapacityError);
    CHECK_NOTHROW(generate_dataset(dataset_capacity(), 2, 1, 8, 0));
}

TEST_CASE("rotate90 matches the hand permutation") {
    Image img;
    img.side = 2;
    img.pixels = {1, 2, 3, 4};
    CHECK(rotate90(img, 1).pixels == std::vector<double>{2, 4, 1, 3});
    CHECK(rotate90(img, 0).pixels == img.pixels);
    CHECK_THROWS_AS(rotate90(img, 4), ArgumentError);
    CHECK_THROWS_AS(rotate90(img, -1), ArgumentError);
}

TEST_CASE("rotations compose as the cyclic group of order four") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        Image img;
        img.side = 8;
        img.pixels.resize(64);
        for (double& p : img.pixels) p = rng.uniform();
        CHECK(rotate90(rotate90(img, 1), 3).pixels == img.pixels);
        const Image full = rotate90(rotate90(rotate90(rotate90(img, 1), 1), 1), 1);
        CHECK(full.pixels == img.pixels);
        CHECK(rotate90(img, 2).pixels == rotate90(rotate90(img, 1), 1).pixels);
    }
}

TEST_CASE("rotated templates never match upright templates") {
    // The noise-free views of every class, at every rotation, must stay
    // distinguishable for the rotation task to carry signal.
    const Dataset ds = generate_dataset(20, 2, 1, 8, 0, 0.0);
    std::vector<Image> views;
    for (int k = 0; k < 20; ++k) {
        const Image& tmpl = ds.train.images[k * 2];
        for (int j = 0; j < 4; ++j) views.push_back(rotate90(tmpl, j));
    }
    for (std::size_t a = 0; a < views.size(); ++a)
        for (std::size_t b = a + 1; b < views.size(); ++b) {
            double dist = 0.0;
            for (int i = 0; i < 64; ++i) {
                const double d = views[a].pixels[i] - views[b].pixels[i];
                dist += d * d;
            }
            CHECK(dist > 0.05);  // comfortably above the noise floor
        }
}

TEST_CASE("task split produces the B + C x T layout") {
    const TaskStream ts = split_tasks(20, 10, 2, 5, 0);
    REQUIRE(ts.tasks.size() == 6);
    CHECK(ts.tasks[0].size() == 10);
    for (int t = 1; t <= 5; ++t) CHECK(ts.tasks[t].size() == 2);

    const TaskStream small = split_tasks(15, 10, 5, 1, 0);
    REQUIRE(small.tasks.size() == 2);
    CHECK(small.tasks[0].size() == 10);
    CHECK(small.tasks[1].size() == 5);
}

TEST_CASE("task split is a disjoint cover for any order seed") {
    for (std::uint64_t seed : {0ull, 1ull, 77ull}) {
        const TaskStream ts = split_tasks(20, 10, 2, 5, seed);
        std::set<int> all;
        for (const auto& task : ts.tasks)
            for (int c : task) CHECK(all.insert(c).second);
        CHECK(all.size() == 20);
    }
    const TaskStream a = split_tasks(20, 10, 2, 5, 1);
    const TaskStream b = split_tasks(20, 10, 2, 5, 2);
    CHECK(a.class_order != b.class_order);
}

TEST_CASE("task split rejects arithmetic mismatches") {
    CHECK_THROWS_AS(split_tasks(20, 10, 3, 5, 0), ProtocolError);
}

TEST_CASE("unified index is the rank in the class order") {
    const TaskStream ts = split_tasks(10, 5, 1, 5, 3);
    for (int i = 0; i < 10; ++i) CHECK(ts.unified_index(ts.class_order[i]) == i);
    CHECK_THROWS_AS(ts.unified_index(99), LookupError);
}

TEST_CASE("dataset export and import round-trip bit-exactly") {
    const Dataset ds = generate_dataset(5, 4, 2, 8, 13, 0.2);
    const std::string path =
        (std::filesystem::temp_directory_path() / "rfs_dataset_roundtrip.bin").string();
    export_dataset(ds, path);
    const Dataset back = import_dataset(path);
    CHECK(back.class_count == ds.class_count);
    CHECK(back.side == ds.side);
    REQUIRE(back.train.images.size() == ds.train.images.size());
    REQUIRE(back.test.images.size() == ds.test.images.size());
    for (std::size_t i = 0; i < ds.train.images.size(); ++i)
        CHECK(back.train.images[i].pixels == ds.train.images[i].pixels);
    CHECK(back.train.labels == ds.train.labels);
    CHECK(back.test.labels == ds.test.labels);
    std::remove(path.c_str());
}
