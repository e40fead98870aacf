#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "umner/features.h"

namespace umner {

struct EntitySpan {
  std::string type;  // PER, LOC, ORG, MISC
  int start = 0;     // inclusive token indices
  int end = 0;

  bool operator<(const EntitySpan& o) const {
    if (start != o.start) return start < o.start;
    if (end != o.end) return end < o.end;
    return type < o.type;
  }
  bool operator==(const EntitySpan& o) const {
    return type == o.type && start == o.start && end == o.end;
  }
};

struct TypeCounts {
  long tp = 0, fp = 0, fn = 0;
  double precision() const;
  double recall() const;
  double f1() const;
};

struct EvaluationReport {
  TypeCounts overall;
  std::map<std::string, TypeCounts> per_type;
  long sentences = 0;
  long tokens = 0;
};

// Sentences separated by blank lines; each starts with `IMGID:<id>` and has
// one `<token>\t<label>` line per token. `require_labels = false` additionally
// accepts bare-token lines (prediction inputs).
std::vector<TokenSequence> parse_dataset(const std::string& path,
                                         bool require_labels = true);

// Inverse of parse_dataset on well-formed data.
void write_predictions(const std::vector<TokenSequence>& data,
                       const std::vector<std::vector<std::string>>& labels,
                       const std::string& path);

// Maximal B-X (I-X)* runs; an orphan I-X starts a new span (conlleval rule).
std::set<EntitySpan> extract_spans(const std::vector<std::string>& labels);

// Micro-averaged exact-match P/R/F1 overall and per type.
EvaluationReport span_prf(const std::vector<std::set<EntitySpan>>& gold,
                          const std::vector<std::set<EntitySpan>>& pred);

struct SplitStats {
  std::string name;
  long sentences = 0;
  std::map<std::string, long> per_type;
  long total = 0;
};

SplitStats dataset_stats(const std::string& split_name,
                         const std::vector<TokenSequence>& data);

struct ConfusionMatrix {
  std::vector<std::string> categories;
  std::vector<std::vector<long>> counts;  // row = annotator A, col = annotator B
};

// CSV layout: header row of category names, then one integer row per category.
ConfusionMatrix read_confusion_csv(const std::string& path);

// kappa = (p_o - p_e) / (1 - p_e); throws on degenerate p_e == 1.
double cohens_kappa(const ConfusionMatrix& m);

}  // namespace umner
