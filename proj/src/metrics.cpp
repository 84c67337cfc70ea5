#include "metrics.hpp"

#include <algorithm>
#include <numeric>

#include "error.hpp"

namespace mlca {

int edit_distance(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double cer(const std::string& ref, const std::string& hyp) {
  if (ref.empty()) throw ConfigError("cer: empty reference gives an undefined rate");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

CpCerResult cp_cer(const std::vector<SessionTranscripts>& sessions) {
  CpCerResult res;
  for (const auto& s : sessions) {
    std::vector<std::string> refs = s.refs;
    std::vector<std::string> hyps = s.hyps;
    const std::size_t n = std::max(refs.size(), hyps.size());
    if (n > 8)
      throw ConfigError("cp_cer: session " + s.session + " has " + std::to_string(n) +
                        " speakers; exhaustive matching is bounded at 8");
    refs.resize(n);
    hyps.resize(n);
    // distance matrix hyp x ref
    std::vector<std::vector<int>> d(n, std::vector<int>(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i][j] = edit_distance(refs[j], hyps[i]);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::int64_t best = -1;
    do {
      std::int64_t total = 0;
      for (std::size_t i = 0; i < n; ++i) total += d[perm[i]][i];
      if (best < 0 || total < best) best = total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::int64_t ref_len = 0;
    for (const auto& r : refs) ref_len += static_cast<std::int64_t>(r.size());
    if (best < 0) best = 0;
    res.total_distance += best;
    res.total_ref_len += ref_len;
    res.per_session.push_back(ref_len > 0 ? static_cast<double>(best) / ref_len : 0.0);
  }
  if (res.total_ref_len == 0) throw ConfigError("cp_cer: empty references across all sessions");
  res.rate = static_cast<double>(res.total_distance) / static_cast<double>(res.total_ref_len);
  return res;
}

}  // namespace mlca
