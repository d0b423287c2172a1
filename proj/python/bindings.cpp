#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "structrep/checkpoint.hpp"
#include "structrep/config.hpp"
#include "structrep/corpus.hpp"
#include "structrep/error.hpp"
#include "structrep/eval.hpp"
#include "structrep/metagradnorm.hpp"
#include "structrep/objectives.hpp"
#include "structrep/pairing.hpp"
#include "structrep/trainer.hpp"

namespace py = pybind11;
using namespace structrep;

namespace {

py::array_t<double> to_numpy(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) view(r, c) = m(r, c);
    }
    return out;
}

Matrix from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw InputError("expected a 2-d array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    auto view = a.unchecked<2>();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = view(r, c);
    }
    return m;
}

std::vector<std::vector<double>> rows_of(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    const Matrix m = from_numpy(a);
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
}

using PyTuples = std::map<std::string, std::set<std::pair<std::string, std::string>>>;

TupleSets tuples_from(const PyTuples& in) {
    TupleSets out;
    for (const auto& [id, set] : in) {
        auto& dst = out[id];
        for (const auto& [category, action] : set) dst.emplace(category, parse_action(action));
    }
    return out;
}

py::dict report_dict(const EvalReport& r) {
    py::list folds;
    for (const auto& f : r.folds) {
        py::dict d;
        d["fold_id"] = f.fold_id;
        d["seen_f1"] = f.seen_f1;
        d["unseen_f1"] = f.unseen_f1;
        folds.append(d);
    }
    py::dict out;
    out["folds"] = folds;
    out["full_f1"] = r.full_f1 ? py::object(py::float_(*r.full_f1)) : py::none();
    out["s_avg"] = r.s_avg;
    out["us_avg"] = r.us_avg;
    out["delta"] = r.delta;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Structured representation learning over frozen claim embeddings";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<Corpus>(m, "Corpus")
        .def_property_readonly("dim", [](const Corpus& c) { return c.dim; })
        .def_property_readonly("ids",
                               [](const Corpus& c) {
                                   std::vector<std::string> ids;
                                   for (const auto& claim : c.claims) ids.push_back(claim.id);
                                   return ids;
                               })
        .def_property_readonly("embeddings", [](const Corpus& c) { return to_numpy(embedding_table(c)); })
        .def_property_readonly("labels",
                               [](const Corpus& c) {
                                   std::vector<std::vector<std::pair<std::string, std::string>>> out;
                                   for (const auto& claim : c.claims) {
                                       auto& row = out.emplace_back();
                                       for (const auto& l : claim.labels) row.emplace_back(l.aspect, to_string(l.action));
                                   }
                                   return out;
                               })
        .def_property_readonly("taxonomy",
                               [](const Corpus& c) {
                                   return std::map<std::string, std::string>(c.taxonomy.mapping().begin(),
                                                                             c.taxonomy.mapping().end());
                               })
        .def("subset", &Corpus::subset, py::arg("ids"))
        .def("save", [](const Corpus& c, const std::filesystem::path& corpus, const std::filesystem::path& taxonomy) {
            save_corpus(c, corpus);
            save_taxonomy(c.taxonomy, taxonomy);
        }, py::arg("corpus_path"), py::arg("taxonomy_path"))
        .def("__len__", [](const Corpus& c) { return c.claims.size(); });

    m.def("load_corpus", &load_corpus, py::arg("corpus_path"), py::arg("taxonomy_path"));
    m.def(
        "generate_synthetic",
        [](int n_categories, int aspects_per_category, int n_claims, int dim, double noise_sigma, double ordinal_step,
           double dual_fraction, double unlabeled_fraction, std::uint64_t seed) {
            SyntheticSpec s{n_categories, aspects_per_category, n_claims, dim, noise_sigma,
                            ordinal_step, dual_fraction,        unlabeled_fraction};
            return generate_synthetic(s, seed);
        },
        py::arg("n_categories") = 6, py::arg("aspects_per_category") = 2, py::arg("n_claims") = 600,
        py::arg("dim") = 32, py::arg("noise_sigma") = 0.1, py::arg("ordinal_step") = 0.5,
        py::arg("dual_fraction") = 0.2, py::arg("unlabeled_fraction") = 0.0, py::arg("seed") = 155);

    py::class_<FoldSplit>(m, "FoldSplit")
        .def_readonly("fold_id", &FoldSplit::fold_id)
        .def_readonly("unseen_categories", &FoldSplit::unseen_categories)
        .def_readonly("train_ids", &FoldSplit::train_ids)
        .def_readonly("seen_test_ids", &FoldSplit::seen_test_ids)
        .def_readonly("unseen_test_ids", &FoldSplit::unseen_test_ids);
    m.def("make_folds", &make_folds, py::arg("corpus"), py::arg("n_folds") = 3, py::arg("unseen_per_fold") = 2,
          py::arg("test_fraction") = 0.2, py::arg("seed") = 155);
    m.def("make_full_split", &make_full_split, py::arg("corpus"), py::arg("test_fraction") = 0.2,
          py::arg("seed") = 155);

    m.def(
        "transition", [](const std::string& a) { return std::string(to_string(transition(parse_action(a)))); },
        py::arg("action"));
    m.def(
        "contrastive_pairs",
        [](const Corpus& c, std::size_t anchor, const std::string& g) {
            const PairSets s = contrastive_pairs(c, anchor, parse_granularity(g));
            return std::make_pair(s.positives, s.negatives);
        },
        py::arg("corpus"), py::arg("anchor"), py::arg("granularity") = "aspect");
    m.def(
        "ordinal_pairs",
        [](const Corpus& c, std::size_t anchor, const std::string& g) {
            const PairSets s = ordinal_pairs(c, anchor, parse_granularity(g));
            return std::make_pair(s.positives, s.negatives);
        },
        py::arg("corpus"), py::arg("anchor"), py::arg("granularity") = "aspect");

    m.def(
        "contrastive_loss",
        [](std::vector<double> anchor, const py::array_t<double, py::array::c_style | py::array::forcecast>& pos,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& neg, double tau) {
            return contrastive_loss(anchor, rows_of(pos), rows_of(neg), tau);
        },
        py::arg("anchor"), py::arg("positives"), py::arg("negatives"), py::arg("tau") = 0.07);
    m.def(
        "ordinal_loss",
        [](std::vector<double> anchor, const py::array_t<double, py::array::c_style | py::array::forcecast>& pos,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& neg, double m0) {
            return ordinal_loss(anchor, rows_of(pos), rows_of(neg), m0);
        },
        py::arg("anchor"), py::arg("positives"), py::arg("negatives"), py::arg("margin_m0") = 0.05);
    m.def(
        "gate",
        [](double l_ctr, double l_ord, double t_ctr, double t_ord) {
            const GateWeights g = gate(l_ctr, l_ord, t_ctr, t_ord);
            return std::make_pair(g.w_ctr, g.w_ord);
        },
        py::arg("l_ctr"), py::arg("l_ord"), py::arg("t_ctr"), py::arg("t_ord"));
    m.def("difficulty_ratios", &difficulty_ratios, py::arg("current"), py::arg("initial"), py::arg("gamma"),
          py::arg("epsilon") = 1e-8);
    m.def("softplus", &softplus);
    m.def("softplus_inverse", &softplus_inverse);

    py::class_<TrainingConfig>(m, "TrainingConfig")
        .def(py::init<>())
        .def_static("from_json", &parse_config, py::arg("text"))
        .def_static("load", &load_config, py::arg("path"))
        .def("to_json", &serialize_config)
        .def("set", &apply_override, py::arg("assignment"))
        .def_readwrite("seed", &TrainingConfig::seed)
        .def_property_readonly("flags", [](const TrainingConfig& c) { return c.flags.names(); });

    py::class_<FoldRun>(m, "FoldRun")
        .def_readonly("seen_f1", &FoldRun::seen_f1)
        .def_readonly("unseen_f1", &FoldRun::unseen_f1)
        .def_property_readonly("runlog", [](const FoldRun& r) { return r.log.to_ndjson(); })
        .def_property_readonly("adapter_checksum", [](const FoldRun& r) { return adapter_checksum(r.adapter); })
        .def(
            "adapted_embeddings",
            [](const FoldRun& r, const Corpus& c) { return to_numpy(adapted_embeddings(r.adapter, c)); },
            py::arg("corpus"))
        .def(
            "predict",
            [](const FoldRun& r, const Corpus& c, const std::string& id, double threshold) {
                std::set<std::pair<std::string, std::string>> out;
                for (const auto& [cat, a] : predict(r.adapter, r.head, c.claims[c.index_of(id)], threshold)) {
                    out.emplace(cat, std::string(to_string(a)));
                }
                return out;
            },
            py::arg("corpus"), py::arg("claim_id"), py::arg("threshold") = 0.5)
        .def(
            "save_checkpoint",
            [](const FoldRun& r, int fold_id, const std::filesystem::path& path) {
                checkpoint_save(Checkpoint{fold_id, r.adapter, r.head, r.meta}, path);
            },
            py::arg("fold_id"), py::arg("path"));
    m.def("run_fold", &run_fold, py::arg("config"), py::arg("corpus"), py::arg("fold"),
          py::call_guard<py::gil_scoped_release>());

    m.def(
        "tuple_f1", [](const PyTuples& pred, const PyTuples& gold) { return tuple_f1(tuples_from(pred), tuples_from(gold)); },
        py::arg("predictions"), py::arg("gold"));
    m.def(
        "seen_unseen_report",
        [](const std::vector<std::tuple<int, double, double>>& folds, int n_folds, std::optional<double> full) {
            std::vector<FoldScore> scores;
            for (const auto& [id, s, u] : folds) scores.push_back({id, s, u});
            return report_dict(seen_unseen_report(scores, n_folds, full));
        },
        py::arg("folds"), py::arg("n_folds"), py::arg("full_f1") = py::none());
    m.def(
        "silhouette",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> labels) {
            return silhouette(from_numpy(x), labels);
        },
        py::arg("embeddings"), py::arg("labels"));
    m.def(
        "calinski_harabasz",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> labels) {
            return calinski_harabasz(from_numpy(x), labels);
        },
        py::arg("embeddings"), py::arg("labels"));
    m.def(
        "separation_ratio",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::vector<int> labels) {
            return separation_ratio(from_numpy(x), labels);
        },
        py::arg("embeddings"), py::arg("labels"));
    m.def("cluster_labels", [](const Corpus& c) { return cluster_labels(c); }, py::arg("corpus"));

    m.def(
        "run_cli",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "structrep");
            return tools::run(args);
        },
        py::arg("args"), "Runs one structrep command line and returns its exit code.");
}
