#include "langsamp/evaluation.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "langsamp/corpus.hpp"

namespace langsamp {

namespace {

nlohmann::json matrix_to_json(const Matd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string strip_script(const std::string& code) {
  const auto pos = code.find('_');
  return pos == std::string::npos ? code : code.substr(0, pos);
}

}  // namespace

nlohmann::json SimilarityMatrix::to_json() const {
  return {{"labels", labels}, {"values", matrix_to_json(values)},
          {"skipped_pairs", skipped_pairs}};
}

nlohmann::json ImprovementMatrix::to_json() const {
  nlohmann::json values_json = matrix_to_json(values);
  for (const auto& [r, c] : undefined_cells) values_json[r][c] = nullptr;
  return {{"labels", labels}, {"values", std::move(values_json)}};
}

nlohmann::json DonorResult::to_json() const {
  nlohmann::json table_json = nlohmann::json::array();
  for (const auto& [code, sim] : table)
    table_json.push_back({{"lang", code}, {"similarity", sim}});
  return {{"donor", donor}, {"similarity", similarity}, {"table", std::move(table_json)}};
}

nlohmann::json PcaResult::to_json() const {
  nlohmann::json ratios = nlohmann::json::array();
  for (Eigen::Index i = 0; i < explained_variance_ratios.size(); ++i)
    ratios.push_back(explained_variance_ratios(i));
  return {{"coordinates", matrix_to_json(coordinates)},
          {"explained_variance_ratios", std::move(ratios)}};
}

Matd sentence_embedding(const ModelParams<double>& params, std::span<const int> token_ids,
                        int layer) {
  const Matd hidden = hidden_at_layer(params, token_ids, layer);
  Matd sum = Matd::Zero(1, hidden.cols());
  long counted = 0;
  for (Eigen::Index i = 0; i < hidden.rows(); ++i) {
    if (token_ids[static_cast<std::size_t>(i)] == Vocab::kPad) continue;
    sum += hidden.row(i);
    ++counted;
  }
  if (counted == 0) throw ValueError("sentence_embedding: no non-PAD positions");
  return sum / static_cast<double>(counted);
}

Matd embed_sentences(const ModelParams<double>& params,
                     const std::vector<std::vector<int>>& sentences, int layer) {
  if (sentences.empty()) throw ValueError("embed_sentences: empty sentence list");
  Matd out(static_cast<Eigen::Index>(sentences.size()), params.config.hidden_dim);
  parallel_for(sentences.size(), [&](std::size_t i) {
    out.row(static_cast<Eigen::Index>(i)) = sentence_embedding(params, sentences[i], layer);
  });
  return out;
}

double retrieval_topk(const Matd& queries, const Matd& targets, int k) {
  if (k < 1) throw ValueError("retrieval_topk: k must be at least 1");
  if (queries.rows() != targets.rows() || queries.cols() != targets.cols())
    throw ShapeError("retrieval_topk: queries and targets must be parallel (same shape)");
  if (queries.rows() < 1) throw ValueError("retrieval_topk: empty embedding set");

  const auto normalize = [](const Matd& m, const char* which) {
    Matd out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const double norm = out.row(i).norm();
      if (!(norm > 0.0))
        throw ValueError(std::string("retrieval_topk: zero-norm ") + which +
                         " embedding at row " + std::to_string(i));
      out.row(i) /= norm;
    }
    return out;
  };
  const Matd qn = normalize(queries, "query");
  const Matd tn = normalize(targets, "target");
  const Matd sim = qn * tn.transpose();

  long hits = 0;
  for (Eigen::Index q = 0; q < sim.rows(); ++q) {
    const double gold = sim(q, q);
    long ahead = 0;  // targets ranked strictly before the gold index
    for (Eigen::Index t = 0; t < sim.cols(); ++t) {
      if (sim(q, t) > gold || (sim(q, t) == gold && t < q)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

SimilarityMatrix centered_pairwise_cosine(const std::vector<Matd>& per_language,
                                          const std::vector<std::string>& labels) {
  const auto k = static_cast<Eigen::Index>(per_language.size());
  if (k < 1) throw ValueError("centered_pairwise_cosine: no languages");
  if (labels.size() != per_language.size())
    throw ShapeError("centered_pairwise_cosine: label count mismatch");
  const Eigen::Index n = per_language.front().rows();
  if (n < 2) throw ValueError("centered_pairwise_cosine: need at least 2 sentences");
  for (const auto& m : per_language)
    if (m.rows() != n || m.cols() != per_language.front().cols())
      throw ShapeError("centered_pairwise_cosine: languages disagree on embedding shape");

  std::vector<Matd> centered;
  centered.reserve(per_language.size());
  for (const auto& m : per_language) {
    Matd c = m;
    const Matd centroid = m.colwise().mean();
    c.rowwise() -= centroid.row(0);
    centered.push_back(std::move(c));
  }

  SimilarityMatrix out;
  out.labels = labels;
  out.values = Matd::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    out.values(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < k; ++b) {
      double total = 0.0;
      long counted = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double na = centered[static_cast<std::size_t>(a)].row(i).norm();
        const double nb = centered[static_cast<std::size_t>(b)].row(i).norm();
        if (!(na > 0.0) || !(nb > 0.0)) {
          ++out.skipped_pairs;
          continue;
        }
        total += centered[static_cast<std::size_t>(a)].row(i).dot(
                     centered[static_cast<std::size_t>(b)].row(i)) /
                 (na * nb);
        ++counted;
      }
      const double mean = counted > 0 ? total / static_cast<double>(counted) : 0.0;
      out.values(a, b) = mean;
      out.values(b, a) = mean;
    }
  }
  return out;
}

ImprovementMatrix similarity_improvement(const SimilarityMatrix& base,
                                         const SimilarityMatrix& model) {
  if (base.labels != model.labels)
    throw ValueError("similarity_improvement: label sets differ");
  if (base.values.rows() != model.values.rows() || base.values.cols() != model.values.cols())
    throw ShapeError("similarity_improvement: matrix shapes differ");

  ImprovementMatrix out;
  out.labels = base.labels;
  out.values = Matd::Zero(base.values.rows(), base.values.cols());
  for (Eigen::Index r = 0; r < base.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < base.values.cols(); ++c) {
      if (r == c) continue;  // diagonal reported as 0
      const double b = base.values(r, c);
      if (std::abs(b) < 1e-9) {
        out.undefined_cells.emplace_back(static_cast<int>(r), static_cast<int>(c));
        continue;
      }
      out.values(r, c) = 100.0 * (model.values(r, c) - b) / std::abs(b);
    }
  }
  return out;
}

DonorResult donor_select(const Matd& lang_emb, const std::vector<std::string>& lang_codes,
                         const std::string& target, const std::vector<std::string>& donors) {
  if (lang_emb.rows() != static_cast<Eigen::Index>(lang_codes.size()))
    throw ShapeError("donor_select: language table and code list disagree");
  if (donors.empty()) throw ValueError("donor_select: empty donor set");

  const auto row_of = [&](const std::string& code) {
    const std::string lang = strip_script(code);
    for (std::size_t i = 0; i < lang_codes.size(); ++i)
      if (lang_codes[i] == lang) return static_cast<Eigen::Index>(i);
    throw DataError("donor_select: unknown language code: " + code);
  };
  const auto cosine = [&](Eigen::Index a, Eigen::Index b) {
    const double na = lang_emb.row(a).norm();
    const double nb = lang_emb.row(b).norm();
    if (!(na > 0.0) || !(nb > 0.0))
      throw ValueError("donor_select: zero-norm language embedding row");
    return lang_emb.row(a).dot(lang_emb.row(b)) / (na * nb);
  };

  const Eigen::Index target_row = row_of(target);
  std::vector<Eigen::Index> eligible;
  for (const auto& code : donors) {
    const Eigen::Index row = row_of(code);
    if (row == target_row) continue;
    if (std::find(eligible.begin(), eligible.end(), row) == eligible.end())
      eligible.push_back(row);
  }
  if (eligible.empty())
    throw ValueError("donor_select: no eligible donor (target excluded)");
  std::sort(eligible.begin(), eligible.end());  // registry order; also breaks ties

  DonorResult out;
  Eigen::Index best = -1;
  double best_sim = 0.0;
  for (const Eigen::Index row : eligible) {
    const double sim = cosine(target_row, row);
    out.table.emplace_back(lang_codes[static_cast<std::size_t>(row)], sim);
    if (best < 0 || sim > best_sim) {
      best = row;
      best_sim = sim;
    }
  }
  out.donor = lang_codes[static_cast<std::size_t>(best)];
  out.similarity = best_sim;
  return out;
}

PcaResult pca_project(const Matd& vectors, int out_dims) {
  const Eigen::Index k = vectors.rows();
  const Eigen::Index d = vectors.cols();
  if (k < 2) throw ValueError("pca_project: need at least 2 vectors");
  const auto max_dims = std::min<Eigen::Index>(k - 1, d);
  if (out_dims < 1 || out_dims > max_dims)
    throw ValueError("pca_project: out_dims must lie in [1, " + std::to_string(max_dims) + "]");

  Matd centered = vectors;
  centered.rowwise() -= Matd(vectors.colwise().mean()).row(0);
  if (centered.cwiseAbs().maxCoeff() == 0.0)
    throw ValueError("pca_project: all vectors identical (zero variance)");

  Eigen::JacobiSVD<Matd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sigma = svd.singularValues();
  const double total = sigma.array().square().sum();

  PcaResult out;
  out.explained_variance_ratios = Eigen::VectorXd(max_dims);
  for (Eigen::Index i = 0; i < max_dims; ++i)
    out.explained_variance_ratios(i) = sigma(i) * sigma(i) / total;

  Matd axes = svd.matrixV().leftCols(out_dims);
  for (Eigen::Index j = 0; j < axes.cols(); ++j) {
    Eigen::Index argmax = 0;
    axes.col(j).cwiseAbs().maxCoeff(&argmax);
    if (axes(argmax, j) < 0.0) axes.col(j) = -axes.col(j);
  }
  out.components = axes;
  out.coordinates = centered * axes;
  return out;
}

std::string svg_scatter(const Matd& coordinates, const std::vector<std::string>& labels) {
  if (coordinates.cols() != 2) throw ShapeError("svg_scatter: coordinates must be K x 2");
  if (static_cast<Eigen::Index>(labels.size()) != coordinates.rows())
    throw ShapeError("svg_scatter: label count mismatch");

  const double margin = 60.0, width = 800.0, height = 600.0;
  double x_min = coordinates.col(0).minCoeff(), x_max = coordinates.col(0).maxCoeff();
  double y_min = coordinates.col(1).minCoeff(), y_max = coordinates.col(1).maxCoeff();
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;
  const auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
  svg += "  <rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < coordinates.rows(); ++i) {
    const double x = margin + (coordinates(i, 0) - x_min) / (x_max - x_min) * (width - 2 * margin);
    const double y =
        height - margin - (coordinates(i, 1) - y_min) / (y_max - y_min) * (height - 2 * margin);
    svg += "  <circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(y) + "\" r=\"4\" fill=\"#1f77b4\"/>\n";
    svg += "  <text x=\"" + fmt(x + 6.0) + "\" y=\"" + fmt(y + 4.0) +
           "\" font-family=\"sans-serif\" font-size=\"12\">" + labels[static_cast<std::size_t>(i)] +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& dir, const Vocab& vocab,
                                    long max_pairs, int max_seq_len) {
  if (max_pairs < 1) throw ValueError("parallel corpus: max_pairs must be positive");
  ParallelCorpus out;
  out.registry = LanguageScriptRegistry::from_directory(dir);

  long aligned = -1;
  for (const auto& entry : out.registry.entries()) {
    std::ifstream in(dir / entry.filename());
    if (!in) throw IoError("cannot open corpus file: " + (dir / entry.filename()).string());
    std::vector<std::vector<int>> encoded;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::vector<int> ids = vocab.encode(line);
      if (ids.empty())
        throw DataError("parallel corpus: empty line " + std::to_string(line_no) + " in " +
                        entry.filename());
      if (static_cast<int>(ids.size()) > max_seq_len) ids.resize(max_seq_len);
      encoded.push_back(std::move(ids));
      if (static_cast<long>(encoded.size()) == max_pairs) break;
    }
    if (aligned < 0)
      aligned = static_cast<long>(encoded.size());
    else if (aligned != static_cast<long>(encoded.size()))
      throw DataError("parallel corpus: files disagree on sentence count (" + entry.filename() +
                      ")");
    out.sentences.push_back(std::move(encoded));
  }
  out.aligned_count = aligned;
  return out;
}

}  // namespace langsamp
