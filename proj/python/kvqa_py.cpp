#include <memory>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "kvqa/config.hpp"
#include "kvqa/demo_bank.hpp"
#include "kvqa/domain.hpp"
#include "kvqa/errors.hpp"
#include "kvqa/gbdt.hpp"
#include "kvqa/knowledge_filter.hpp"
#include "kvqa/pipeline.hpp"
#include "kvqa/vector_math.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
    return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

// A Session is pinned in memory, so the Python object owns it by pointer.
class PyRun {
public:
    PyRun(const std::filesystem::path& config, const std::vector<std::string>& overrides)
        : session_(std::make_unique<kvqa::Session>(kvqa::load_config(config, overrides))) {}

    explicit PyRun(kvqa::RunConfig config) : session_(std::make_unique<kvqa::Session>(std::move(config))) {}

    py::dict build_bank(bool resume) {
        const auto r = kvqa::run_build_bank(*session_, resume);
        py::dict d;
        d["size"] = r.bank.size();
        d["visited"] = r.stats.visited;
        d["appended"] = r.stats.appended;
        d["replaced"] = r.stats.replaced;
        d["rejected"] = r.stats.rejected;
        d["skipped"] = r.stats.skipped;
        return d;
    }

    py::dict train_perceiver() {
        const auto r = kvqa::run_train_perceiver(*session_);
        py::dict d;
        d["vectors"] = r.n_vectors;
        d["class_counts"] = std::vector<std::size_t>(r.class_counts.begin(), r.class_counts.end());
        d["train_accuracy"] = r.train_accuracy;
        return d;
    }

    py::object evaluate(bool ablate) { return to_py(kvqa::run_evaluate(*session_, ablate).to_json()); }

    py::object config() const { return to_py(kvqa::to_json(session_->config())); }
    std::filesystem::path output_dir() const { return session_->config().output_dir; }

private:
    std::unique_ptr<kvqa::Session> session_;
};

}  // namespace

PYBIND11_MODULE(_kvqa, m) {
    m.doc() = "Core of the kvqa knowledge-based VQA pipeline";

    // Translators run newest first, so subclasses are registered after Error.
    const auto& error = py::register_exception<kvqa::Error>(m, "Error");
    py::register_exception<kvqa::ConfigError>(m, "ConfigError", error);
    py::register_exception<kvqa::FormatError>(m, "FormatError", error);
    py::register_exception<kvqa::BackendError>(m, "BackendError", error);
    py::register_exception<kvqa::TrainingError>(m, "TrainingError", error);
    py::register_exception<kvqa::RetrievalError>(m, "RetrievalError", error);
    py::register_exception<kvqa::IngestionError>(m, "IngestionError", error);
    py::register_exception<kvqa::EvaluationError>(m, "EvaluationError", error);
    py::register_exception<kvqa::DomainError>(m, "DomainError", error);

    m.def("normalize_answer", [](const std::string& s) { return kvqa::normalize_answer(s).normalized; });
    m.def("soft_accuracy",
          [](const std::string& pred, const std::vector<std::string>& gt) {
              return kvqa::soft_accuracy(kvqa::normalize_answer(pred), gt);
          },
          py::arg("prediction"), py::arg("ground_truth"));
    m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
        return kvqa::cosine_similarity(a, b);
    });
    m.def("feature_names", [] {
        std::vector<std::string> names;
        for (auto n : kvqa::feature_names()) names.emplace_back(n);
        return names;
    });

    m.def("generate_world",
          [](const std::filesystem::path& out, std::uint64_t seed, std::size_t n_problems, std::size_t n_facts,
             double known, double noise, const std::string& answer_mode) {
              kvqa::MockWorldParams p;
              p.seed = seed;
              p.n_problems = n_problems;
              p.n_facts = n_facts;
              p.vlm_known_fraction = known;
              p.noise = noise;
              const auto corpus = kvqa::write_mock_workspace(p, out, kvqa::parse_answer_mode(answer_mode));
              py::dict d;
              d["problems"] = corpus.problems.size();
              d["facts"] = corpus.world.fact_table.size();
              d["seeds"] = corpus.seeds.size();
              d["config"] = out / "config.json";
              return d;
          },
          py::arg("out"), py::arg("seed") = 7, py::arg("n_problems") = 500, py::arg("n_facts") = 1000,
          py::arg("known") = 0.5, py::arg("noise") = 0.2, py::arg("answer_mode") = "direct",
          "Write a mock world, its problems, seeds and a config.json into `out`.");

    py::class_<PyRun>(m, "Run", "One pipeline run over a config file")
        .def(py::init<const std::filesystem::path&, const std::vector<std::string>&>(), py::arg("config"),
             py::arg("overrides") = std::vector<std::string>{})
        .def_static("from_manifest",
                    [](const std::filesystem::path& manifest) {
                        return std::make_unique<PyRun>(kvqa::config_from_manifest(manifest));
                    })
        .def("build_bank", &PyRun::build_bank, py::arg("resume") = false)
        .def("train_perceiver", &PyRun::train_perceiver)
        .def("evaluate", &PyRun::evaluate, py::arg("ablate") = false)
        .def_property_readonly("config", &PyRun::config)
        .def_property_readonly("output_dir", &PyRun::output_dir);

    py::class_<kvqa::DemoBank>(m, "DemoBank")
        .def_static("load", &kvqa::DemoBank::load)
        .def("__len__", &kvqa::DemoBank::size)
        .def_property_readonly("dim", &kvqa::DemoBank::dim)
        .def_property_readonly("threshold", &kvqa::DemoBank::lambda)
        .def("ids",
             [](const kvqa::DemoBank& b) {
                 std::vector<std::string> ids;
                 for (const auto& e : b.entries()) ids.push_back(e.id());
                 return ids;
             })
        .def("counts",
             [](const kvqa::DemoBank& b) {
                 std::vector<std::pair<std::size_t, std::size_t>> out;
                 for (const auto& e : b.entries()) out.emplace_back(e.useful, e.harmful);
                 return out;
             },
             "(useful, harmful) per entry")
        .def("embedding", [](const kvqa::DemoBank& b, std::size_t i) { return b.entries().at(i).embedding; })
        .def("retrieve",
             [](const kvqa::DemoBank& b, const std::vector<double>& query, std::size_t k, const std::string& exclude) {
                 std::vector<std::string> ids;
                 for (const auto* e : b.retrieve_top_k(query, k, exclude)) ids.push_back(e->id());
                 return ids;
             },
             py::arg("query"), py::arg("k"), py::arg("exclude") = "")
        .def("serialize", &kvqa::DemoBank::serialize)
        .def("save", &kvqa::DemoBank::save);

    py::class_<kvqa::Perceiver>(m, "Perceiver")
        .def_static("load", &kvqa::Perceiver::load)
        .def("classify",
             [](const kvqa::Perceiver& p, const std::vector<double>& features) {
                 const auto c = p.classify(features);
                 return py::make_tuple(std::string(kvqa::to_string(c.label)),
                                       std::vector<double>(c.probabilities.begin(), c.probabilities.end()));
             })
        .def("feature_importance",
             [](const kvqa::Perceiver& p) {
                 const auto imp = p.feature_importance();
                 py::dict d;
                 for (std::size_t f = 0; f < kvqa::kFeatureCount; ++f) d[py::str(std::string(kvqa::feature_names()[f]))] = imp.share[f];
                 return d;
             })
        .def("serialize", &kvqa::Perceiver::serialize)
        .def("save", &kvqa::Perceiver::save);

    m.def("fit_gbdt",
          [](const std::vector<std::vector<double>>& x, const std::vector<int>& y, std::size_t n_classes,
             const py::dict& params) {
              if (x.empty()) throw kvqa::TrainingError("fit_gbdt: no rows");
              kvqa::gbdt::FeatureMatrix fm(x.front().size());
              for (const auto& row : x) {
                  if (row.size() != fm.cols()) throw kvqa::TrainingError("fit_gbdt: ragged rows");
                  fm.add_row(row);
              }
              json pj = kvqa::gbdt::to_json(kvqa::gbdt::BoostParams{});
              const json overrides = from_py(params);
              for (const auto& [k, v] : overrides.items()) pj[k] = v;
              const auto r = kvqa::gbdt::fit(fm, y, n_classes, kvqa::gbdt::boost_params_from_json(pj));
              return py::make_tuple(to_py(r.ensemble.to_json()), r.loss_history);
          },
          py::arg("x"), py::arg("y"), py::arg("n_classes"), py::arg("params") = py::dict(),
          "Fit a softmax boosted ensemble; returns (ensemble_json, loss_history).");
    m.def("gbdt_predict_proba",
          [](const py::object& ensemble, const std::vector<std::vector<double>>& x) {
              const auto e = kvqa::gbdt::Ensemble::from_json(from_py(ensemble));
              std::vector<std::vector<double>> out;
              for (const auto& row : x) out.push_back(e.predict_proba(row));
              return out;
          });
}
