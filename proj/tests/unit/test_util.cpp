#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "score/common.hpp"
#include "score/util/base64.hpp"
#include "score/util/io.hpp"
#include "score/util/rng.hpp"
#include "score/util/sha256.hpp"

namespace fs = std::filesystem;
using namespace score;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("score_util_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("rng is deterministic for a fixed seed") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng seeds produce distinct streams") {
  Rng a(1);
  Rng b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("rng fork is stable and independent of parent consumption") {
  Rng parent(7);
  Rng f1 = parent.fork(0x10);
  parent.next_u64();
  parent.next_u64();
  Rng f2 = parent.fork(0x10);
  CHECK(f1.next_u64() == f2.next_u64());
  CHECK(parent.fork(0x10).next_u64() != parent.fork(0x11).next_u64());
}

TEST_CASE("rng bounds hold") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    CHECK(rng.below(7) < 7);
    int64_t v = rng.between(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  CHECK(rng.below(1) == 0);
  CHECK(rng.between(5, 5) == 5);
}

TEST_CASE("rng below covers the full range") {
  Rng rng(11);
  std::set<uint64_t> seen;
  for (int i = 0; i < 500; ++i) seen.insert(rng.below(5));
  CHECK(seen == std::set<uint64_t>{0, 1, 2, 3, 4});
}

TEST_CASE("rng shuffle permutes without losing elements") {
  Rng rng(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  std::vector<int> orig = v;
  rng.shuffle(v);
  CHECK(v != orig);
  std::sort(v.begin(), v.end());
  CHECK(v == orig);
}

TEST_CASE("rng normal has sane moments") {
  Rng rng(21);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("sha256 handles block boundaries") {
  // 55, 56, and 64 byte inputs exercise the padding edge cases.
  std::string a(55, 'a');
  std::string b(56, 'a');
  std::string c(64, 'a');
  CHECK(sha256_hex(a) != sha256_hex(b));
  CHECK(sha256_hex(b) != sha256_hex(c));
  CHECK(sha256_hex(a).size() == 64);
  for (char ch : sha256_hex(c)) CHECK(std::string("0123456789abcdef").find(ch) != std::string::npos);
}

TEST_CASE("base64 round trips arbitrary bytes") {
  Rng rng(5);
  for (size_t len = 0; len < 40; ++len) {
    std::vector<uint8_t> data(len);
    for (auto& b : data) b = uint8_t(rng.below(256));
    std::string enc = base64_encode(data.data(), data.size());
    CHECK(base64_decode(enc) == data);
  }
}

TEST_CASE("base64 known vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_decode_string("Zm9vYmFy") == "foobar");
}

TEST_CASE("base64 rejects malformed input") {
  CHECK_THROWS_AS(base64_decode("Zg"), FormatError);       // bad length
  CHECK_THROWS_AS(base64_decode("Zm9v!A=="), FormatError); // bad alphabet
  CHECK_THROWS_AS(base64_decode("=Zm9v"), FormatError);    // misplaced pad
  CHECK_THROWS_AS(base64_decode("Zm9v===="), FormatError);
}

TEST_CASE("file io round trips including binary content") {
  fs::path dir = temp_dir("io");
  fs::path p = dir / "blob.bin";
  std::string content = "line1\nline2\0tail";
  content.resize(16);
  write_file(p, content);
  CHECK(read_file(p) == content);
  CHECK_THROWS_AS(read_file(dir / "missing.txt"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("collect_files walks recursively in sorted order") {
  fs::path dir = temp_dir("walk");
  fs::create_directories(dir / "b");
  fs::create_directories(dir / "a");
  write_file(dir / "b" / "x.txt", "1");
  write_file(dir / "a" / "y.txt", "2");
  write_file(dir / "z.txt", "3");
  auto files = collect_files({dir});
  REQUIRE(files.size() == 3);
  CHECK(files[0].filename() == "y.txt");
  CHECK(files[1].filename() == "x.txt");
  CHECK(files[2].filename() == "z.txt");
  CHECK(std::is_sorted(files.begin(), files.end(),
                       [](const fs::path& a, const fs::path& b) { return a.string() < b.string(); }));
  // A plain file argument is passed through.
  auto single = collect_files({dir / "z.txt"});
  REQUIRE(single.size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("split_lines handles terminators and empty lines") {
  auto lines = split_lines("a\nb\r\n\nc");
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "a");
  CHECK(lines[1] == "b");
  CHECK(lines[2] == "");
  CHECK(lines[3] == "c");
  CHECK(split_lines("").empty());
  CHECK(split_lines("\n").size() == 1);
}
