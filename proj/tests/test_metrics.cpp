#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "error.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace mlca;

namespace {

// quadratic DP reference, written independently of src/metrics.cpp
int edit_distance_ref(const std::string& a, const std::string& b) {
  const int n = (int)a.size(), m = (int)b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (int i = 1; i <= n; ++i) {
    cur[0] = i;
    for (int j = 1; j <= m; ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[m];
}

std::string random_string(Rng& rng, int max_len) {
  std::string s;
  const int n = rng.randint(max_len + 1);
  for (int i = 0; i < n; ++i) s.push_back(char('a' + rng.randint(4)));
  return s;
}

}  // namespace

TEST_CASE("edit distance hand cases") {
  CHECK(edit_distance("", "") == 0);
  CHECK(edit_distance("abc", "abc") == 0);
  CHECK(edit_distance("abc", "") == 3);
  CHECK(edit_distance("", "abc") == 3);
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(edit_distance("flaw", "lawn") == 2);
  CHECK(edit_distance("ab", "ba") == 2);
}

TEST_CASE("edit distance matches an independent DP on random pairs") {
  Rng rng(61);
  for (int i = 0; i < 300; ++i) {
    const std::string a = random_string(rng, 12);
    const std::string b = random_string(rng, 12);
    CHECK(edit_distance(a, b) == edit_distance_ref(a, b));
  }
}

TEST_CASE("cer normalizes by reference length and rejects empty references") {
  CHECK(cer("abcd", "abcd") == doctest::Approx(0.0));
  CHECK(cer("abcd", "abcx") == doctest::Approx(0.25));
  CHECK(cer("ab", "abcd") == doctest::Approx(1.0));  // can exceed via insertions too
  CHECK(cer("a", "bcd") == doctest::Approx(3.0));
  CHECK_THROWS_AS(cer("", "abc"), ConfigError);
}

TEST_CASE("cp_cer picks the best stream-to-speaker assignment") {
  SessionTranscripts s;
  s.session = "s1";
  s.refs = {"aaaa", "bbbb"};
  s.hyps = {"bbbx", "aaaa"};  // crossed: identity assignment costs 8, swap costs 1
  CpCerResult r = cp_cer({s});
  CHECK(r.total_ref_len == 8);
  CHECK(r.total_distance == 1);
  CHECK(r.rate == doctest::Approx(1.0 / 8.0));
  REQUIRE(r.per_session.size() == 1);
  CHECK(r.per_session[0] == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("cp_cer pools distance and length across sessions") {
  SessionTranscripts s1{"s1", {"aaaa"}, {"aaab"}};   // dist 1, len 4
  SessionTranscripts s2{"s2", {"cc", "dd"}, {"dd", "cx"}};  // swap: dist 1, len 4
  CpCerResult r = cp_cer({s1, s2});
  CHECK(r.total_distance == 2);
  CHECK(r.total_ref_len == 8);
  CHECK(r.rate == doctest::Approx(2.0 / 8.0));
  REQUIRE(r.per_session.size() == 2);
  CHECK(r.per_session[0] == doctest::Approx(0.25));
  CHECK(r.per_session[1] == doctest::Approx(0.25));
}

TEST_CASE("cp_cer equals brute-force permutation search on random sessions") {
  Rng rng(62);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + rng.randint(4);  // up to 4 speakers
    SessionTranscripts s;
    s.session = "r";
    bool any_ref = false;
    for (int i = 0; i < k; ++i) {
      std::string ref = random_string(rng, 8);
      if (!ref.empty()) any_ref = true;
      s.refs.push_back(ref);
      s.hyps.push_back(random_string(rng, 8));
    }
    if (!any_ref) continue;  // zero total reference length is rejected
    // brute force over all assignments
    std::vector<int> perm(k);
    std::iota(perm.begin(), perm.end(), 0);
    std::int64_t best = INT64_MAX;
    do {
      std::int64_t d = 0;
      for (int i = 0; i < k; ++i) d += edit_distance_ref(s.refs[i], s.hyps[perm[i]]);
      best = std::min(best, d);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CpCerResult r = cp_cer({s});
    CHECK(r.total_distance == best);
  }
}

TEST_CASE("cp_cer input contracts") {
  CHECK_THROWS_AS(cp_cer({}), ConfigError);  // zero reference length overall
  // unbalanced stream counts are padded with empty strings, not rejected:
  // the surplus hypothesis is charged its full length against an empty ref
  SessionTranscripts uneven{"s", {"aa"}, {"aa", "bbb"}};
  CHECK(cp_cer({uneven}).total_distance == 3);
  SessionTranscripts big;
  big.session = "big";
  for (int i = 0; i < 9; ++i) {  // 9 speakers exceeds the exhaustive limit
    big.refs.push_back("a");
    big.hyps.push_back("a");
  }
  CHECK_THROWS_AS(cp_cer({big}), ConfigError);
}
