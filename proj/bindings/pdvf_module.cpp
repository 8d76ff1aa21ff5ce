#include "pdvf/checkpoint.hpp"
#include "pdvf/evalsuite.hpp"
#include "pdvf/linalg.hpp"
#include "pdvf/pipeline.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace pdvf;

namespace {

Embedding as_embedding(EmbedKind kind, const VecF& v) {
    Embedding e;
    e.kind = kind;
    e.values = v;
    require(e.unit_norm(1e-3f), "embedding must be unit norm");
    return e;
}

}  // namespace

PYBIND11_MODULE(_pdvf, m) {
    m.doc() = "Policy-dynamics value functions: environments, embeddings and "
              "the quadratic return estimator";

    py::class_<StepResult>(m, "StepResult")
        .def_readonly("state", &StepResult::state)
        .def_readonly("reward", &StepResult::reward)
        .def_readonly("done", &StepResult::done);

    py::class_<EnvInstance>(m, "EnvInstance")
        .def(py::init([](const std::string& family, double d, uint64_t seed) {
                 return EnvInstance(family_from_name(family), d, seed);
             }),
             py::arg("family"), py::arg("d"), py::arg("seed") = 0)
        .def("reset", &EnvInstance::reset)
        .def("step", &EnvInstance::step, py::arg("action"))
        .def_property_readonly("d", &EnvInstance::d)
        .def_property_readonly("done", &EnvInstance::done)
        .def_property_readonly("state_dim", &EnvInstance::state_dim)
        .def_property_readonly("action_dim", &EnvInstance::action_dim)
        .def_property_readonly("episode_cap", &EnvInstance::episode_cap)
        .def_property_readonly("family", [](const EnvInstance& e) {
            return family_name(e.family());
        });

    m.def("train_test_split", [](const std::string& family) {
        auto spec = default_family_spec(family_from_name(family));
        return py::make_tuple(spec.train_d, spec.test_d, spec.n_probe);
    });
    m.def("spaceship_field", [](const Eigen::Vector2f& x, double d) {
        return spaceship_field(x, d);
    });
    m.def("spaceship_terminal_reward", [](const Eigen::Vector2f& x) {
        return spaceship_terminal_reward(x);
    });

    m.def("gae", [](const VecD& rewards, const VecD& values,
                    const std::vector<uint8_t>& dones, double gamma, double lam) {
        auto [adv, ret] = gae(rewards, values, dones, gamma, lam);
        return py::make_tuple(adv, ret);
    });

    m.def("lower_triangular_assemble",
          [](const VecD& v) { return lower_triangular_assemble<double>(v); });
    m.def("top_eigvec", [](const MatD& A) {
        auto r = top_eigvec<double>(A);
        return py::make_tuple(r.lambda, r.vec);
    });

    py::class_<ActorCritic>(m, "ActorCritic")
        .def(py::init<int, int, uint64_t, int>(), py::arg("state_dim"),
             py::arg("action_dim"), py::arg("seed"), py::arg("extra_dim") = 0)
        .def("act",
             [](const ActorCritic& ac, const VecF& s, bool deterministic,
                uint64_t seed) {
                 Rng rng(seed);
                 auto r = ac.act(s, deterministic, &rng);
                 return py::make_tuple(r.action, r.logp, r.value);
             },
             py::arg("state"), py::arg("deterministic") = true,
             py::arg("seed") = 0)
        .def("save",
             [](const ActorCritic& ac, const std::filesystem::path& path) {
                 save_checkpoint(ac.params(), path);
             })
        .def_static("load", [](const std::filesystem::path& path, int state_dim,
                               int action_dim, int extra_dim) {
            return ActorCritic::from_params(load_checkpoint(path), state_dim,
                                            action_dim, extra_dim);
        }, py::arg("path"), py::arg("state_dim"), py::arg("action_dim"),
           py::arg("extra_dim") = 0);

    py::class_<Autoencoder>(m, "Autoencoder")
        .def("save",
             [](const Autoencoder& ae, const std::filesystem::path& path) {
                 save_checkpoint(ae.params, path);
             })
        .def("load_params",
             [](Autoencoder& ae, const std::filesystem::path& path) {
                 ae.params = load_checkpoint(path);
             });

    m.def("make_dynamics_autoencoder",
          [](int state_dim, int action_dim, int d_emb, uint64_t seed) {
              EmbedConfig cfg;
              cfg.d_emb_dynamics = d_emb;
              ArchConfig arch;
              return make_dynamics_autoencoder(state_dim, action_dim, cfg, arch, seed);
          },
          py::arg("state_dim"), py::arg("action_dim"), py::arg("d_emb") = 2,
          py::arg("seed") = 0);
    m.def("make_policy_autoencoder",
          [](int state_dim, int action_dim, int d_emb, uint64_t seed) {
              EmbedConfig cfg;
              cfg.d_emb_policy = d_emb;
              ArchConfig arch;
              return make_policy_autoencoder(state_dim, action_dim, cfg, arch, seed);
          },
          py::arg("state_dim"), py::arg("action_dim"), py::arg("d_emb") = 8,
          py::arg("seed") = 0);
    m.def("encode_dynamics", [](Autoencoder& ae, const MatF& transitions) {
        return encode_dynamics(ae, transitions).values;
    });
    m.def("encode_policy", [](Autoencoder& ae, const MatF& state_actions) {
        return encode_policy(ae, state_actions).values;
    });
    m.def("decode_next_state",
          [](const Autoencoder& ae, const VecF& s, const VecF& a, const VecF& z) {
              return decode_next_state(ae, s, a, z);
          });
    m.def("decode_action", [](const Autoencoder& ae, const VecF& s, const VecF& z) {
        return decode_action(ae, s, z);
    });

    py::class_<ValueFunction>(m, "ValueFunction");
    m.def("make_value_function",
          [](int state_dim, int d_emb_dynamics, int d_emb_policy, uint64_t seed) {
              return make_value_function(state_dim, d_emb_dynamics, d_emb_policy,
                                         64, seed);
          },
          py::arg("state_dim"), py::arg("d_emb_dynamics"), py::arg("d_emb_policy"),
          py::arg("seed") = 0);
    m.def("build_A", [](const ValueFunction& vf, const VecF& s0, const VecF& z_d) {
        return build_A(vf, s0, as_embedding(EmbedKind::Dynamics, z_d)).A;
    });
    m.def("predict_return",
          [](const ValueFunction& vf, const VecF& s0, const VecF& z_pi,
             const VecF& z_d) {
              return predict_return(vf, s0, as_embedding(EmbedKind::Policy, z_pi),
                                    as_embedding(EmbedKind::Dynamics, z_d));
          });
    m.def("optimal_policy_embedding", [](const MatF& A) {
        QuadraticForm form;
        form.A = A;
        return optimal_policy_embedding(form).values;
    });

    m.def("kmeans_clusters",
          [](const std::vector<VecF>& embeddings, int k, uint64_t seed) {
              auto r = kmeans_clusters(embeddings, k, seed);
              return py::make_tuple(r.assignments, r.centroids, r.inertia);
          });

    m.def("run_pipeline_phase",
          [](const std::filesystem::path& config_path, const std::string& phase,
             bool force) {
              auto cfg = load_config(config_path);
              run_phase(phase_from_name(phase), cfg, force);
          },
          py::arg("config_path"), py::arg("phase"), py::arg("force") = false);
}
