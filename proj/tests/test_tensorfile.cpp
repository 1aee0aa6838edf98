#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "gebd/datamodel.hpp"
#include "gebd/random.hpp"
#include "gebd/tensorfile.hpp"
#include "testutil.hpp"

using namespace gebd;
using gebd::testutil::TempDir;

TEST_CASE("tensor container round-trips f32 and f64 exactly") {
    TempDir dir;
    Rng rng(41);

    TensorFile tf;
    std::vector<float> a(2 * 3 * 4);
    for (auto& x : a) x = static_cast<float>(rng.uniform(-10.0, 10.0));
    std::vector<double> b(5 * 7);
    for (auto& x : b) x = rng.uniform(-10.0, 10.0);
    tf.add_f32("features", {2, 3, 4}, a);
    tf.add_f64("weights", {5, 7}, b);

    const auto path = dir.file("pack.bin");
    tf.write(path);
    const TensorFile loaded = TensorFile::read(path);

    REQUIRE(loaded.entries().size() == 2);
    const TensorEntry& ea = loaded.get("features");
    CHECK(ea.dtype == "f32");
    CHECK(ea.shape == std::vector<int>({2, 3, 4}));
    CHECK(ea.f32 == a); // bit-exact
    const TensorEntry& eb = loaded.get("weights");
    CHECK(eb.dtype == "f64");
    CHECK(eb.f64 == b);
    CHECK(loaded.content_hash() == tf.content_hash());
}

TEST_CASE("shape/data mismatch is rejected at add time") {
    TensorFile tf;
    CHECK_THROWS_AS(tf.add_f32("bad", {2, 2}, std::vector<float>(3)), Error);
}

TEST_CASE("missing tensor name throws, find returns null") {
    TensorFile tf;
    tf.add_f64("x", {1}, {1.0});
    CHECK(tf.find("y") == nullptr);
    CHECK_THROWS_WITH_AS(tf.get("y"), doctest::Contains("'y'"), Error);
}

TEST_CASE("corrupted payload fails the hash check") {
    TempDir dir;
    TensorFile tf;
    tf.add_f64("x", {4}, {1.0, 2.0, 3.0, 4.0});
    const auto path = dir.file("pack.bin");
    tf.write(path);

    // Flip one byte in the payload (the last byte of the file).
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto end = f.tellg();
    f.seekp(end - std::streamoff(1));
    f.put('\x5a');
    f.close();

    CHECK_THROWS_WITH_AS(TensorFile::read(path), doctest::Contains("hash"), Error);
}

TEST_CASE("bad magic and truncated payload are rejected") {
    TempDir dir;
    const auto path = dir.file("pack.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTATENSOR 9\ndata\n";
    }
    CHECK_THROWS_WITH_AS(TensorFile::read(path), doctest::Contains("magic"), Error);

    {
        std::ofstream out(path, std::ios::binary);
        out << "GEBDTENSOR 1\ntensor x f64 1 8\ndata\n";
        const double one = 1.0;
        out.write(reinterpret_cast<const char*>(&one), sizeof one); // 1 of 8 values
    }
    CHECK_THROWS_WITH_AS(TensorFile::read(path), doctest::Contains("truncated"), Error);
}

TEST_CASE("content hash tracks payload changes only") {
    TensorFile a, b, c;
    a.add_f64("x", {2}, {1.0, 2.0});
    b.add_f64("x", {2}, {1.0, 2.0});
    c.add_f64("x", {2}, {1.0, 2.5});
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("written files are byte-identical across runs") {
    TempDir dir;
    auto build = [] {
        TensorFile tf;
        Rng rng(99);
        std::vector<double> d(64);
        for (auto& x : d) x = rng.normal();
        tf.add_f64("d", {8, 8}, std::move(d));
        return tf;
    };
    const auto p1 = dir.file("a.bin");
    const auto p2 = dir.file("b.bin");
    build().write(p1);
    build().write(p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
}
