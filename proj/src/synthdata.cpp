#include "gateshare/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gateshare/error.hpp"

namespace gateshare {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<double> draw_centroids(const SynthTaskSpec& spec, SeededRng& rng) {
  // Random directions pushed to a fixed radius. At the default dimension and
  // scale the pairwise distances comfortably exceed the outermost shell.
  std::vector<double> centroids(spec.coarse_classes * spec.input_dim);
  for (std::size_t m = 0; m < spec.coarse_classes; ++m) {
    double norm2 = 0.0;
    for (std::size_t j = 0; j < spec.input_dim; ++j) {
      const double v = rng.normal();
      centroids[m * spec.input_dim + j] = v;
      norm2 += v * v;
    }
    const double scale = spec.centroid_scale / std::sqrt(std::max(norm2, 1e-12));
    for (std::size_t j = 0; j < spec.input_dim; ++j)
      centroids[m * spec.input_dim + j] *= scale;
  }
  return centroids;
}

Dataset generate_split(const SynthTaskSpec& spec, const std::vector<double>& centroids,
                       std::size_t n, SeededRng rng) {
  const std::size_t d = spec.input_dim;
  const std::size_t fine = spec.fine_classes();

  // Exact per-class counts, remainder spread over the first classes, then a
  // seeded shuffle of the assignment order.
  std::vector<std::size_t> fine_label(n);
  {
    std::size_t idx = 0;
    const std::size_t base = n / fine, rem = n % fine;
    for (std::size_t c = 0; c < fine; ++c) {
      const std::size_t count = base + (c < rem ? 1 : 0);
      for (std::size_t i = 0; i < count; ++i) fine_label[idx++] = c;
    }
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(fine_label[i - 1], fine_label[j]);
    }
  }

  Dataset ds;
  ds.n = n;
  ds.d = d;
  ds.x.resize(n * d);
  TaskColumn coarse{"task0:classification", TaskKind::Classification,
                    spec.coarse_classes, std::vector<double>(n)};
  TaskColumn fine_col{"task1:classification", TaskKind::Classification, fine,
                      std::vector<double>(n)};
  TaskColumn reg{"task2:regression", TaskKind::Regression, 0,
                 std::vector<double>(n)};

  std::vector<double> dir(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t f = fine_label[i];
    const std::size_t m = f / spec.sub_per_coarse;
    const std::size_t s = f % spec.sub_per_coarse;
    const bool easy = rng.uniform() < spec.heterogeneity;

    double norm2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dir[j] = rng.normal();
      norm2 += dir[j] * dir[j];
    }
    const double inv_norm = 1.0 / std::sqrt(std::max(norm2, 1e-12));
    const double jitter = easy ? spec.jitter_easy : spec.jitter_hard;
    const double radius = spec.shell_base + static_cast<double>(s) * spec.shell_gap +
                          jitter * rng.normal();
    const double* c = centroids.data() + m * d;
    double dist2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double offset = radius * dir[j] * inv_norm + spec.ambient_noise * rng.normal();
      ds.x[i * d + j] = c[j] + offset;
      dist2 += offset * offset;
    }
    coarse.y[i] = static_cast<double>(m);
    fine_col.y[i] = static_cast<double>(f);
    reg.y[i] = std::sqrt(dist2);
  }

  ds.tasks.push_back(std::move(coarse));
  ds.tasks.push_back(std::move(fine_col));
  if (spec.include_regression) ds.tasks.push_back(std::move(reg));
  return ds;
}

}  // namespace

void SynthTaskSpec::validate() const {
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw ConfigError("synth spec: all splits must be non-empty");
  if (coarse_classes < 2 || sub_per_coarse < 2)
    throw ConfigError("synth spec: need at least 2 coarse and 2 sub clusters");
  if (input_dim < coarse_classes)
    throw ConfigError("synth spec: input_dim " + std::to_string(input_dim) +
                      " too small for " + std::to_string(coarse_classes) +
                      " clusters");
  if (heterogeneity < 0.0 || heterogeneity > 1.0)
    throw ConfigError("synth spec: heterogeneity must lie in [0,1]");
  if (!(shell_gap > 0.0) || !(shell_base > 0.0))
    throw ConfigError("synth spec: shell geometry must be positive");
}

nlohmann::json SynthTaskSpec::to_json() const {
  return nlohmann::json{{"n_train", n_train},
                        {"n_val", n_val},
                        {"n_test", n_test},
                        {"input_dim", input_dim},
                        {"coarse_classes", coarse_classes},
                        {"sub_per_coarse", sub_per_coarse},
                        {"include_regression", include_regression},
                        {"heterogeneity", heterogeneity},
                        {"centroid_scale", centroid_scale},
                        {"shell_base", shell_base},
                        {"shell_gap", shell_gap},
                        {"jitter_hard", jitter_hard},
                        {"jitter_easy", jitter_easy},
                        {"ambient_noise", ambient_noise}};
}

SynthTaskSpec SynthTaskSpec::from_json(const nlohmann::json& j) {
  SynthTaskSpec s;
  static const char* keys[] = {"n_train",       "n_val",
                               "n_test",        "input_dim",
                               "coarse_classes", "sub_per_coarse",
                               "include_regression", "heterogeneity",
                               "centroid_scale", "shell_base",
                               "shell_gap",     "jitter_hard",
                               "jitter_easy",   "ambient_noise"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* k) {
          return it.key() == k;
        }) == std::end(keys))
      throw ConfigError("synth spec: unknown key '" + it.key() + "'");
  }
  s.n_train = j.value("n_train", s.n_train);
  s.n_val = j.value("n_val", s.n_val);
  s.n_test = j.value("n_test", s.n_test);
  s.input_dim = j.value("input_dim", s.input_dim);
  s.coarse_classes = j.value("coarse_classes", s.coarse_classes);
  s.sub_per_coarse = j.value("sub_per_coarse", s.sub_per_coarse);
  s.include_regression = j.value("include_regression", s.include_regression);
  s.heterogeneity = j.value("heterogeneity", s.heterogeneity);
  s.centroid_scale = j.value("centroid_scale", s.centroid_scale);
  s.shell_base = j.value("shell_base", s.shell_base);
  s.shell_gap = j.value("shell_gap", s.shell_gap);
  s.jitter_hard = j.value("jitter_hard", s.jitter_hard);
  s.jitter_easy = j.value("jitter_easy", s.jitter_easy);
  s.ambient_noise = j.value("ambient_noise", s.ambient_noise);
  s.validate();
  return s;
}

MultiTaskData generate(const SynthTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  SeededRng root(seed);
  SeededRng centroid_rng = root.derive(101);
  const std::vector<double> centroids = draw_centroids(spec, centroid_rng);
  MultiTaskData data;
  data.train = generate_split(spec, centroids, spec.n_train, root.derive(1));
  data.val = generate_split(spec, centroids, spec.n_val, root.derive(2));
  data.test = generate_split(spec, centroids, spec.n_test, root.derive(3));
  return data;
}

std::vector<double> Dataset::row(std::size_t i) const {
  return std::vector<double>(x.begin() + static_cast<long>(i * d),
                             x.begin() + static_cast<long>((i + 1) * d));
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Binary: return "binary";
    case TaskKind::Regression: return "regression";
  }
  return "unknown";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "classification") return TaskKind::Classification;
  if (name == "binary") return TaskKind::Binary;
  if (name == "regression") return TaskKind::Regression;
  throw ConfigError("unknown task kind '" + name + "'");
}

namespace {

void write_split(std::ofstream& out, const Dataset& ds, const char* split_name) {
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (std::size_t j = 0; j < ds.d; ++j) {
      out << format_double(ds.x[i * ds.d + j]) << ",";
    }
    for (const auto& task : ds.tasks) out << format_double(task.y[i]) << ",";
    out << split_name << "\n";
  }
}

}  // namespace

void save_csv(const MultiTaskData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write dataset: " + path);
  const Dataset& ref = data.train;
  for (std::size_t j = 0; j < ref.d; ++j) out << "f" << j << ",";
  for (const auto& task : ref.tasks) out << task.name << ",";
  out << "split\n";
  write_split(out, data.train, "train");
  write_split(out, data.val, "val");
  write_split(out, data.test, "test");
}

MultiTaskData load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing dataset file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("dataset " + path + ": empty file");

  // Header: f0..f{d-1}, then task{k}:{kind} columns, then 'split'.
  std::vector<std::string> header;
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) header.push_back(cell);
  }
  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  if (d == 0)
    throw ConfigError("dataset " + path + ": malformed header, expected f0..");
  std::vector<TaskColumn> proto;
  std::size_t col = d;
  for (; col < header.size() && header[col] != "split"; ++col) {
    const std::string& name = header[col];
    const std::size_t task_index = proto.size();
    const std::string expected_prefix = "task" + std::to_string(task_index) + ":";
    if (name.rfind(expected_prefix, 0) != 0)
      throw ConfigError("dataset " + path + ": malformed header column '" + name +
                        "', expected '" + expected_prefix + "<kind>'");
    TaskColumn tc;
    tc.name = name;
    tc.kind = task_kind_from_name(name.substr(expected_prefix.size()));
    proto.push_back(std::move(tc));
  }
  if (col >= header.size())
    throw ConfigError("dataset " + path + ": missing required column 'split'");
  if (proto.empty())
    throw ConfigError("dataset " + path + ": no task label columns");

  MultiTaskData data;
  for (Dataset* ds : {&data.train, &data.val, &data.test}) {
    ds->d = d;
    ds->tasks = proto;
  }

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    {
      std::istringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
    }
    if (cells.size() != header.size())
      throw ConfigError("dataset " + path + ": row " + std::to_string(row) +
                        " has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(header.size()));
    const std::string& split = cells.back();
    Dataset* ds = nullptr;
    if (split == "train") ds = &data.train;
    else if (split == "val") ds = &data.val;
    else if (split == "test") ds = &data.test;
    else
      throw ConfigError("dataset " + path + ": unknown split '" + split +
                        "' at row " + std::to_string(row));
    auto parse_cell = [&](std::size_t c) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
        return v;
      } catch (const std::exception&) {
        throw ConfigError("dataset " + path + ": non-numeric cell at row " +
                          std::to_string(row) + " column " + std::to_string(c));
      }
    };
    for (std::size_t j = 0; j < d; ++j) ds->x.push_back(parse_cell(j));
    for (std::size_t t = 0; t < proto.size(); ++t) {
      const double v = parse_cell(d + t);
      if (ds->tasks[t].kind == TaskKind::Classification) {
        if (v < 0.0 || v != std::floor(v))
          throw ConfigError("dataset " + path +
                            ": classification label must be a non-negative "
                            "integer at row " + std::to_string(row));
      } else if (ds->tasks[t].kind == TaskKind::Binary) {
        if (v != 0.0 && v != 1.0)
          throw ConfigError("dataset " + path + ": binary label at row " +
                            std::to_string(row) + " must be 0 or 1");
      }
      ds->tasks[t].y.push_back(v);
    }
    ds->n += 1;
  }

  // Infer class counts across all splits so the three share one space.
  for (std::size_t t = 0; t < proto.size(); ++t) {
    if (proto[t].kind != TaskKind::Classification) continue;
    double mx = 0.0;
    for (const Dataset* ds : {&data.train, &data.val, &data.test})
      for (double v : ds->tasks[t].y) mx = std::max(mx, v);
    const auto classes = static_cast<std::size_t>(mx) + 1;
    for (Dataset* ds : {&data.train, &data.val, &data.test})
      ds->tasks[t].classes = classes;
  }
  return data;
}

void validate_against_spec(const MultiTaskData& data, const SynthTaskSpec& spec) {
  const std::size_t expected[] = {spec.coarse_classes, spec.fine_classes()};
  for (const Dataset* ds : {&data.train, &data.val, &data.test}) {
    if (ds->d != spec.input_dim)
      throw ConfigError("dataset: input dim " + std::to_string(ds->d) +
                        " does not match declared " + std::to_string(spec.input_dim));
    for (std::size_t t = 0; t < ds->tasks.size() && t < 2; ++t) {
      for (std::size_t i = 0; i < ds->tasks[t].y.size(); ++i) {
        const double v = ds->tasks[t].y[i];
        if (v < 0.0 || v >= static_cast<double>(expected[t]))
          throw ConfigError("dataset: label out of declared class range at row " +
                            std::to_string(i));
      }
    }
  }
}

}  // namespace gateshare
