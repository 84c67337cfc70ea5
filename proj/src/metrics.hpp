#ifndef MLCA_METRICS_HPP
#define MLCA_METRICS_HPP

#include <string>
#include <vector>

namespace mlca {

int edit_distance(const std::string& a, const std::string& b);

// Levenshtein(ref, hyp) / len(ref). ref must be nonempty.
double cer(const std::string& ref, const std::string& hyp);

struct SessionTranscripts {
  std::string session;
  std::vector<std::string> refs;  // one concatenated string per reference speaker
  std::vector<std::string> hyps;  // one per system output stream
};

struct CpCerResult {
  double rate = 0.0;
  std::int64_t total_distance = 0;
  std::int64_t total_ref_len = 0;
  std::vector<double> per_session;
};

// Per session: best assignment of hypothesis streams to reference speakers
// (exhaustive over permutations, <= 8 speakers), summed edit distance over
// sessions divided by summed reference length.
CpCerResult cp_cer(const std::vector<SessionTranscripts>& sessions);

}  // namespace mlca

#endif
