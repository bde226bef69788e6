#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "evade/classifier.hpp"
#include "evade/experiment.hpp"
#include "evade/mcts.hpp"
#include "evade/metrics.hpp"
#include "evade/mutation.hpp"
#include "evade/preprocess.hpp"
#include "evade/random_search.hpp"
#include "evade/surrogate.hpp"

namespace py = pybind11;
using namespace evade;

namespace {

nlohmann::json to_native(const py::handle& obj) {
  const py::object dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object to_python(const nlohmann::json& j) {
  const py::object loads = py::module_::import("json").attr("loads");
  return loads(j.dump());
}

std::vector<MutationKind> to_kinds(const std::vector<int>& ids) {
  std::vector<MutationKind> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(mutation_from_id(i));
  return out;
}

std::vector<int> to_ids(const std::vector<MutationKind>& path) {
  std::vector<int> out;
  out.reserve(path.size());
  for (auto k : path) out.push_back(static_cast<int>(id(k)));
  return out;
}

/// A preprocessor and classifier loaded from their JSON documents.
class Model {
 public:
  Model(const py::dict& preprocessor, const py::dict& classifier, double threshold)
      : pre_(preprocessor_from_json(to_native(preprocessor))),
        clf_(classifier_from_json(to_native(classifier))),
        surrogate_(pre_, *clf_, threshold) {}

  double malicious_probability(const py::dict& sample) const {
    return surrogate_.malicious_probability(sample_from_json(to_native(sample)));
  }
  bool is_benign(const py::dict& sample) const { return surrogate_.is_benign(sample_from_json(to_native(sample))); }
  const Surrogate& surrogate() const { return surrogate_; }

 private:
  PreprocessorModel pre_;
  std::unique_ptr<BinaryClassifier> clf_;
  ModelSurrogate surrogate_;
};

/// Either a Model or a Python callable taking a record dict.
std::unique_ptr<Surrogate> surrogate_of(const py::object& obj, const Model** model) {
  if (py::isinstance<Model>(obj)) {
    *model = obj.cast<const Model*>();
    return nullptr;
  }
  if (!PyCallable_Check(obj.ptr())) throw py::type_error("surrogate must be a Model or a callable");
  return std::make_unique<PredicateSurrogate>([obj](const SampleRecord& r) {
    nlohmann::json j = r;
    return obj(to_python(j)).cast<bool>();
  });
}

py::dict outcome_dict(const SearchOutcome& out) {
  py::dict d;
  d["found"] = out.found;
  d["path"] = to_ids(out.path);
  nlohmann::json t = out.telemetry;
  d["telemetry"] = to_python(t);
  return d;
}

template <class Fn>
py::dict run_search(const py::dict& sample, const py::object& surrogate, const py::dict& context, Fn&& fn) {
  const auto record = sample_from_json(to_native(sample));
  const auto ctx = context_from_json(to_native(context));
  const Model* model = nullptr;
  const auto predicate = surrogate_of(surrogate, &model);
  if (model) {
    SearchOutcome out;
    {
      py::gil_scoped_release release;
      out = fn(record, model->surrogate(), ctx);
    }
    return outcome_dict(out);
  }
  return outcome_dict(fn(record, *predicate, ctx));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Mutation-path search against malware classifiers";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<MutationError>(m, "MutationError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.def("mutation_names", [] {
    std::vector<std::string> out;
    for (auto k : all_mutation_kinds()) out.emplace_back(mutation_name(k));
    return out;
  });
  m.def("canonical_key", [](const std::vector<int>& path) { return canonical_key(to_kinds(path)); }, py::arg("path"));

  m.def(
      "generate_synthetic",
      [](std::size_t count_per_class, std::uint64_t seed) {
        py::list out;
        for (const auto& r : generate_synthetic(count_per_class, seed)) {
          nlohmann::json j = r;
          out.append(to_python(j));
        }
        return out;
      },
      py::arg("count_per_class"), py::arg("seed") = 0);

  m.def(
      "derive_context",
      [](const py::list& samples, std::uint64_t seed) {
        std::vector<SampleRecord> records;
        for (const auto& s : samples) records.push_back(sample_from_json(to_native(s)));
        nlohmann::json j = derive_context(records, seed);
        return to_python(j);
      },
      py::arg("samples"), py::arg("seed") = 0);

  m.def(
      "allowed_mutations",
      [](const py::dict& sample, const py::dict& context) {
        return to_ids(allowed_mutations(sample_from_json(to_native(sample)), {}, context_from_json(to_native(context))));
      },
      py::arg("sample"), py::arg("context"));

  m.def(
      "apply_path",
      [](const py::dict& sample, const std::vector<int>& path, const py::dict& context) {
        const auto record = sample_from_json(to_native(sample));
        const auto ctx = context_from_json(to_native(context));
        nlohmann::json j = apply_path(record, to_kinds(path), ctx, path_rng(ctx, record.sample_id));
        return to_python(j);
      },
      py::arg("sample"), py::arg("path"), py::arg("context"));

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) { return roc_auc(scores, labels); },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "mutation_stats",
      [](const std::vector<std::vector<int>>& paths) {
        std::vector<std::vector<MutationKind>> kinds;
        for (const auto& p : paths) kinds.push_back(to_kinds(p));
        py::list out;
        const auto stats = compute_mutation_stats(kinds);
        for (auto k : all_mutation_kinds()) {
          const auto& s = stats[id(k)];
          py::dict row;
          row["mutation"] = std::string(mutation_name(k));
          row["alone"] = s.alone;
          row["in_group"] = s.in_group;
          row["repeats"] = s.repeats;
          row["affected_instances"] = s.affected_instances;
          row["total_occurrence"] = s.total_occurrence;
          out.append(row);
        }
        return out;
      },
      py::arg("paths"));

  py::class_<Model>(m, "Model")
      .def(py::init<const py::dict&, const py::dict&, double>(), py::arg("preprocessor"), py::arg("classifier"),
           py::arg("threshold") = 0.5)
      .def("malicious_probability", &Model::malicious_probability, py::arg("sample"))
      .def("is_benign", &Model::is_benign, py::arg("sample"));

  m.def(
      "search_mcts",
      [](const py::dict& sample, const py::object& surrogate, const py::dict& context, std::size_t iterations,
         std::uint64_t seed, const std::string& backprop, const std::string& recovery, std::size_t patience) {
        SearchConfig cfg;
        cfg.iterations = iterations;
        cfg.seed = seed;
        cfg.backprop = backprop_mode_from_string(backprop);
        cfg.recovery = recovery_mode_from_string(recovery);
        cfg.patience = patience;
        cfg.validate();
        return run_search(sample, surrogate, context, [&](const SampleRecord& r, const Surrogate& s,
                                                          const MutationContext& c) { return search(r, s, c, cfg); });
      },
      py::arg("sample"), py::arg("surrogate"), py::arg("context"), py::arg("iterations") = 500, py::arg("seed") = 0,
      py::arg("backprop") = "faithful", py::arg("recovery") = "argmax", py::arg("patience") = 100);

  m.def(
      "search_random",
      [](const py::dict& sample, const py::object& surrogate, const py::dict& context, std::size_t max_mutations,
         std::size_t attempts, std::optional<std::size_t> query_budget, std::uint64_t seed) {
        RandomSearchConfig cfg;
        cfg.max_mutations = max_mutations;
        cfg.attempts = attempts;
        cfg.query_budget = query_budget;
        cfg.seed = seed;
        cfg.validate();
        return run_search(sample, surrogate, context,
                          [&](const SampleRecord& r, const Surrogate& s, const MutationContext& c) {
                            return random_search(r, s, c, cfg);
                          });
      },
      py::arg("sample"), py::arg("surrogate"), py::arg("context"), py::arg("max_mutations") = 5,
      py::arg("attempts") = 500, py::arg("query_budget") = py::none(), py::arg("seed") = 0);

  m.def(
      "run_experiment",
      [](const py::dict& config) {
        const auto cfg = experiment_config_from_json(to_native(config));
        EvasionReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(cfg);
        }
        nlohmann::json j = report;
        return to_python(j);
      },
      py::arg("config"));
}
