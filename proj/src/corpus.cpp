#include "umner/corpus.h"

#include <fstream>
#include <sstream>

#include "umner/bilstm_crf.h"
#include "umner/error.h"

namespace umner {

namespace {

const std::vector<std::string> kEntityTypes = {"PER", "LOC", "ORG", "MISC"};

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

double TypeCounts::precision() const {
  return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
}
double TypeCounts::recall() const {
  return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
}
double TypeCounts::f1() const {
  double p = precision(), r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::vector<TokenSequence> parse_dataset(const std::string& path, bool require_labels) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open");
  std::vector<TokenSequence> out;
  TokenSequence cur;
  bool in_sentence = false;
  std::string line;
  long lineno = 0;

  auto flush = [&]() {
    if (!in_sentence) return;
    if (cur.tokens.empty())
      throw format_error(path + ":" + std::to_string(lineno) + ": sentence with no tokens");
    out.push_back(cur);
    cur = TokenSequence{};
    in_sentence = false;
  };

  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("IMGID:", 0) == 0) {
      flush();
      cur.image_id = line.substr(6);
      in_sentence = true;
      continue;
    }
    if (!in_sentence)
      throw format_error(path + ":" + std::to_string(lineno) +
                         ": token line before IMGID header");
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      if (require_labels)
        throw format_error(path + ":" + std::to_string(lineno) +
                           ": expected <token>\\t<label>");
      cur.tokens.push_back(line);
      cur.labels.push_back("O");
      continue;
    }
    std::string token = line.substr(0, tab);
    std::string label = line.substr(tab + 1);
    if (token.empty())
      throw format_error(path + ":" + std::to_string(lineno) + ": empty token");
    if (!is_valid_tag(label))
      throw format_error(path + ":" + std::to_string(lineno) + ": unknown tag '" + label +
                         "'");
    cur.tokens.push_back(token);
    cur.labels.push_back(label);
  }
  flush();
  return out;
}

void write_predictions(const std::vector<TokenSequence>& data,
                       const std::vector<std::vector<std::string>>& labels,
                       const std::string& path) {
  if (data.size() != labels.size())
    throw contract_error("write_predictions: sentence/label list sizes differ");
  std::ofstream out(path);
  if (!out) throw io_error(path + ": cannot open for writing");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].tokens.size() != labels[i].size())
      throw contract_error("write_predictions: token/label length mismatch in sentence " +
                           std::to_string(i));
    out << "IMGID:" << data[i].image_id << "\n";
    for (std::size_t j = 0; j < data[i].tokens.size(); ++j)
      out << data[i].tokens[j] << "\t" << labels[i][j] << "\n";
    out << "\n";
  }
  if (!out) throw io_error(path + ": write failed");
}

std::set<EntitySpan> extract_spans(const std::vector<std::string>& labels) {
  std::set<EntitySpan> spans;
  int start = -1;
  std::string type;
  auto close = [&](int end) {
    if (start >= 0) spans.insert({type, start, end});
    start = -1;
  };
  for (int i = 0; i < int(labels.size()); ++i) {
    const std::string& l = labels[i];
    if (l == "O") {
      close(i - 1);
    } else if (l[0] == 'B') {
      close(i - 1);
      start = i;
      type = l.substr(2);
    } else {  // I-X
      std::string t = l.substr(2);
      if (start < 0 || t != type) {
        close(i - 1);
        start = i;  // orphan I-X starts a new span
        type = t;
      }
    }
  }
  close(int(labels.size()) - 1);
  return spans;
}

EvaluationReport span_prf(const std::vector<std::set<EntitySpan>>& gold,
                          const std::vector<std::set<EntitySpan>>& pred) {
  if (gold.size() != pred.size())
    throw contract_error("span_prf: gold/pred sentence counts differ (" +
                         std::to_string(gold.size()) + " vs " + std::to_string(pred.size()) +
                         ")");
  EvaluationReport report;
  report.sentences = long(gold.size());
  for (const auto& t : kEntityTypes) report.per_type[t];
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& span : pred[i]) {
      bool hit = gold[i].count(span) > 0;
      auto& tc = report.per_type[span.type];
      (hit ? tc.tp : tc.fp) += 1;
      (hit ? report.overall.tp : report.overall.fp) += 1;
    }
    for (const auto& span : gold[i]) {
      if (pred[i].count(span)) continue;
      report.per_type[span.type].fn += 1;
      report.overall.fn += 1;
    }
  }
  return report;
}

SplitStats dataset_stats(const std::string& split_name,
                         const std::vector<TokenSequence>& data) {
  SplitStats s;
  s.name = split_name;
  s.sentences = long(data.size());
  for (const auto& t : kEntityTypes) s.per_type[t] = 0;
  for (const auto& seq : data)
    for (const auto& span : extract_spans(seq.labels)) {
      s.per_type[span.type] += 1;
      s.total += 1;
    }
  return s;
}

ConfusionMatrix read_confusion_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open");
  ConfusionMatrix m;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (m.categories.empty()) {
      m.categories = fields;
      continue;
    }
    std::vector<long> row;
    for (const auto& f : fields) {
      try {
        std::size_t pos = 0;
        long v = std::stol(f, &pos);
        if (pos != f.size() || v < 0) throw std::invalid_argument(f);
        row.push_back(v);
      } catch (const std::exception&) {
        throw format_error(path + ":" + std::to_string(lineno) +
                           ": expected nonnegative integer, got '" + f + "'");
      }
    }
    if (row.size() != m.categories.size())
      throw format_error(path + ":" + std::to_string(lineno) + ": row width " +
                         std::to_string(row.size()) + " vs " +
                         std::to_string(m.categories.size()) + " categories");
    m.counts.push_back(std::move(row));
  }
  if (m.categories.empty() || m.counts.size() != m.categories.size())
    throw format_error(path + ": matrix is not square (" + std::to_string(m.counts.size()) +
                       " rows, " + std::to_string(m.categories.size()) + " columns)");
  return m;
}

double cohens_kappa(const ConfusionMatrix& m) {
  std::size_t k = m.categories.size();
  double total = 0.0, diag = 0.0;
  std::vector<double> row_sum(k, 0.0), col_sum(k, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double c = double(m.counts[i][j]);
      total += c;
      row_sum[i] += c;
      col_sum[j] += c;
      if (i == j) diag += c;
    }
  if (total <= 0.0) throw domain_error("cohens_kappa: empty matrix");
  double p_o = diag / total;
  double p_e = 0.0;
  for (std::size_t i = 0; i < k; ++i) p_e += row_sum[i] * col_sum[i];
  p_e /= total * total;
  if (p_e >= 1.0) throw domain_error("cohens_kappa: degenerate marginals (p_e = 1)");
  return (p_o - p_e) / (1.0 - p_e);
}

}  // namespace umner
