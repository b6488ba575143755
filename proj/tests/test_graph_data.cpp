#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "localegn/dataset.hpp"
#include "localegn/graph.hpp"

using namespace localegn;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("localegn_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void write(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
}

SignalSeries const_series(std::size_t T, std::size_t nodes, double base = 0.0,
                          double slope = 0.0) {
    SignalSeries s;
    s.values = Tensor2(T, nodes);
    for (std::size_t r = 0; r < T; ++r)
        for (std::size_t c = 0; c < nodes; ++c)
            s.values(r, c) = base + slope * static_cast<double>(r) + static_cast<double>(c);
    return s;
}

} // namespace

TEST_CASE("load_graph parses edges and normalizes distances") {
    TempDir dir;
    write(dir.file("e.csv"), "tail,head,distance_km\n0,1,1.0\n1,0,2.0\n");
    const DirectedGraph g = load_graph(dir.file("e.csv"));
    CHECK(g.num_nodes == 2);
    CHECK(g.num_edges() == 2);
    CHECK(g.edge_attr(0, 0) == doctest::Approx(0.5));
    CHECK(g.edge_attr(1, 0) == doctest::Approx(1.0));
    CHECK_FALSE(g.has_speeds());
}

TEST_CASE("load_graph rejects bad rows with their row number") {
    TempDir dir;
    SUBCASE("dangling node index") {
        write(dir.file("e.csv"), "tail,head,distance_km\n5,1,1.0\n");
        try {
            load_graph(dir.file("e.csv"), 3);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 1") != std::string::npos);
        }
    }
    SUBCASE("duplicate edge") {
        write(dir.file("e.csv"), "tail,head,distance_km\n0,1,1.0\n0,1,2.0\n");
        CHECK_THROWS_AS(load_graph(dir.file("e.csv")), DataError);
    }
    SUBCASE("non-positive distance") {
        write(dir.file("e.csv"), "tail,head,distance_km\n0,1,0.0\n");
        CHECK_THROWS_AS(load_graph(dir.file("e.csv")), DataError);
    }
    SUBCASE("missing header") {
        write(dir.file("e.csv"), "0,1,1.0\n");
        CHECK_THROWS_AS(load_graph(dir.file("e.csv")), DataError);
    }
}

TEST_CASE("self-loops are accepted") {
    TempDir dir;
    write(dir.file("e.csv"), "tail,head,distance_km\n0,1,1.0\n3,3,0.5\n1,2,2.0\n2,3,1.5\n");
    const DirectedGraph g = load_graph(dir.file("e.csv"));
    CHECK(g.num_nodes == 4);
    CHECK(g.num_edges() == 4);
}

TEST_CASE("graph round-trips through write and load") {
    TempDir dir;
    write(dir.file("e.csv"),
          "tail,head,distance_km,freeflow_kmh,shockwave_kmh\n0,1,1.25,60,12\n1,2,2.5,80,15\n2,0,0.75,60,12\n");
    const DirectedGraph g = load_graph(dir.file("e.csv"));
    write_graph(dir.file("copy.csv"), g);
    const DirectedGraph g2 = load_graph(dir.file("copy.csv"));
    REQUIRE(g2.num_edges() == g.num_edges());
    CHECK(g2.num_nodes == g.num_nodes);
    for (std::size_t k = 0; k < g.num_edges(); ++k) {
        CHECK(g2.edges[k].tail == g.edges[k].tail);
        CHECK(g2.edges[k].head == g.edges[k].head);
        CHECK(g2.distance_km[k] == g.distance_km[k]);
        CHECK(g2.freeflow_kmh[k] == g.freeflow_kmh[k]);
        CHECK(g2.edge_attr(k, 0) == g.edge_attr(k, 0));
    }
}

TEST_CASE("load_signals validates the layout") {
    TempDir dir;
    write(dir.file("e.csv"), "tail,head,distance_km\n0,1,1.0\n1,0,2.0\n");
    const DirectedGraph g = load_graph(dir.file("e.csv"));

    SUBCASE("well-formed file") {
        std::string body = "n0,n1\n";
        for (int r = 0; r < 2016; ++r) body += "1.5,2.5\n";
        write(dir.file("s.csv"), body);
        const SignalSeries s = load_signals(dir.file("s.csv"), g);
        CHECK(s.steps() == 2016);
        CHECK(s.num_nodes() == 2);
        CHECK(s.values(2015, 1) == 2.5);
    }
    SUBCASE("empty file") {
        write(dir.file("s.csv"), "");
        CHECK_THROWS_AS(load_signals(dir.file("s.csv"), g), DataError);
    }
    SUBCASE("column count mismatch") {
        write(dir.file("s.csv"), "n0,n1,n2\n1,2,3\n");
        CHECK_THROWS_AS(load_signals(dir.file("s.csv"), g), DataError);
    }
    SUBCASE("unparsable cell names row and column") {
        write(dir.file("s.csv"), "n0,n1\n1.0,oops\n");
        try {
            load_signals(dir.file("s.csv"), g);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("row 1") != std::string::npos);
            CHECK(msg.find("column 2") != std::string::npos);
        }
    }
    SUBCASE("missing cell is rejected, not imputed") {
        write(dir.file("s.csv"), "n0,n1\n1.0,\n");
        CHECK_THROWS_AS(load_signals(dir.file("s.csv"), g), DataError);
    }
    SUBCASE("signals round-trip") {
        std::string body = "n0,n1\n1.25,2\n3.5,0.125\n";
        write(dir.file("s.csv"), body);
        const SignalSeries s = load_signals(dir.file("s.csv"), g);
        write_signals(dir.file("copy.csv"), s);
        const SignalSeries s2 = load_signals(dir.file("copy.csv"), g);
        REQUIRE(s2.steps() == s.steps());
        for (std::size_t r = 0; r < s.steps(); ++r)
            for (std::size_t c = 0; c < 2; ++c) CHECK(s2.values(r, c) == s.values(r, c));
    }
}

TEST_CASE("split arithmetic and validation") {
    SUBCASE("T=2016 splits 1512/252/252") {
        const SignalSeries s = const_series(2016, 2);
        const SplitSegments seg = split_series(s, 12, 12);
        CHECK(seg.train.length() == 1512);
        CHECK(seg.val.length() == 252);
        CHECK(seg.test.length() == 252);
    }
    SUBCASE("T=8 floor arithmetic gives 6/1/1") {
        const SplitSegments seg = split_lengths(8);
        CHECK(seg.train.length() == 6);
        CHECK(seg.val.length() == 1);
        CHECK(seg.test.length() == 1);
    }
    SUBCASE("T=16 with lookback 12 fails: val segment too short") {
        const SignalSeries s = const_series(16, 2);
        CHECK_THROWS_AS(split_series(s, 12, 1), DataError);
    }
    SUBCASE("segments are disjoint, contiguous, and cover the series") {
        const SignalSeries s = const_series(997, 3);
        const SplitSegments seg = split_series(s, 12, 1);
        CHECK(seg.train.begin == 0);
        CHECK(seg.val.begin == seg.train.end);
        CHECK(seg.test.begin == seg.val.end);
        CHECK(seg.test.end == 997);
    }
}

TEST_CASE("make_windows counting and content") {
    const SignalSeries s = const_series(14, 2, 100.0, 1.0);
    const Segment whole{0, 14};

    const auto windows = make_windows(s, whole, 12, 1);
    REQUIRE(windows.size() == 2);

    // window content equals the raw series slice, no normalization applied
    for (std::size_t m = 0; m < 12; ++m)
        CHECK(windows[0].window(0, m) == s.values(m, 0));
    CHECK(windows[0].future(1, 0) == s.values(12, 1));

    // the last sample's target is the final series row
    CHECK(windows.back().tau + 1 == 13);
    CHECK(windows.back().future(0, 0) == s.values(13, 0));
}

TEST_CASE("subsampling window start indices") {
    SUBCASE("20% of 1500 windows is 300") {
        const auto idx = subsample_indices(1500, 0.2, 7);
        CHECK(idx.size() == 300);
        for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i - 1] < idx[i]);
    }
    SUBCASE("fraction 1.0 is the identity") {
        const auto idx = subsample_indices(10, 1.0, 7);
        REQUIRE(idx.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(idx[i] == i);
    }
    SUBCASE("same seed, same set") {
        CHECK(subsample_indices(500, 0.2, 42) == subsample_indices(500, 0.2, 42));
        CHECK(subsample_indices(500, 0.2, 42) != subsample_indices(500, 0.2, 43));
    }
    SUBCASE("empty result is an error") {
        CHECK_THROWS_AS(subsample_indices(3, 0.1, 7), DataError);
        CHECK_THROWS_AS(subsample_indices(10, 0.0, 7), ConfigError);
        CHECK_THROWS_AS(subsample_indices(10, 1.5, 7), ConfigError);
    }
    SUBCASE("contiguous mode returns one block") {
        const auto idx = subsample_indices(100, 0.2, 11, true);
        REQUIRE(idx.size() == 20);
        for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] == idx[i - 1] + 1);
    }
}

TEST_CASE("normalizer is fitted on the training slice only") {
    SignalSeries s = const_series(80, 2);
    // make the test segment wildly different from train
    for (std::size_t r = 70; r < 80; ++r)
        for (std::size_t c = 0; c < 2; ++c) s.values(r, c) = 1e6;

    const SplitSegments seg = split_series(s, 4, 1);
    const Normalizer n = Normalizer::fit(s, seg.train);

    double mean = 0.0;
    std::size_t count = seg.train.length() * 2;
    for (std::size_t r = seg.train.begin; r < seg.train.end; ++r)
        for (std::size_t c = 0; c < 2; ++c) mean += s.values(r, c);
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t r = seg.train.begin; r < seg.train.end; ++r)
        for (std::size_t c = 0; c < 2; ++c)
            var += (s.values(r, c) - mean) * (s.values(r, c) - mean);

    CHECK(n.mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(n.std == doctest::Approx(std::sqrt(var / count)).epsilon(1e-12));

    // round trip is the identity within 1e-12 relative error
    for (double x : {0.0, 17.5, -3.25, 1e6}) {
        const double rel = std::abs(n.invert(n.apply(x)) - x) / std::max(1.0, std::abs(x));
        CHECK(rel < 1e-12);
    }
}

TEST_CASE("normalizer rejects zero variance") {
    const SignalSeries s = const_series(40, 2, 5.0); // columns differ, rows constant
    SignalSeries flat;
    flat.values = Tensor2(40, 2, 3.0);
    CHECK_THROWS_AS(Normalizer::fit(flat, Segment{0, 40}), DataError);
    CHECK_NOTHROW(Normalizer::fit(s, Segment{0, 40}));
}

TEST_CASE("prepare_dataset wires the protocol together") {
    SignalSeries s = const_series(200, 3, 10.0, 0.05);
    const Dataset d = prepare_dataset(s, 12, 12, 0.5, 3);
    CHECK(d.train_full.size() == d.segments.train.length() - 12);
    CHECK(d.train.size() == d.train_full.size() / 2);
    CHECK(d.test.front().future.cols() == 12);
    // windows stay inside their segments
    for (const auto& w : d.val) {
        CHECK(w.tau >= d.segments.val.begin + 11);
        CHECK(w.tau + 1 < d.segments.val.end);
    }
}
