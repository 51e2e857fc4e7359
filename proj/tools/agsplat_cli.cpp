// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/cluster.hpp>
#include <agsplat/error.hpp>
#include <agsplat/graph.hpp>
#include <agsplat/io.hpp>
#include <agsplat/pipeline.hpp>
#include <agsplat/query.hpp>
#include <agsplat/render.hpp>
#include <agsplat/service.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace agsplat;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    bool seed_set      = false;
    std::string config;
    std::string out = "out";
};

PipelineConfig
load_config(const Globals &g) {
    PipelineConfig cfg = benchmark_config(g.seed);
    if (!g.config.empty()) cfg = config_from_json(read_json_file(g.config), cfg);
    if (g.seed_set) cfg.seed = g.seed;
    return cfg;
}

std::vector<AnchorId>
read_selection(const std::string &path) {
    const Json j = read_json_file(path);
    const Json &ids = j.is_object() ? j.at("anchor_ids") : j;
    std::vector<AnchorId> out;
    for (const auto &v : ids) out.push_back(v.get<AnchorId>());
    return out;
}

Json
selection_to_json(const Selection &sel) {
    Json j{{"seeds", sel.seeds}, {"anchor_ids", sel.grown}};
    if (sel.click) j["click"] = Json{{"view", sel.click->view}, {"px", sel.click->px}, {"py", sel.click->py}};
    return j;
}

void
write_selection_mask(const fs::path &out, const Scene &scene, const Camera &cam, const std::vector<AnchorId> &ids) {
    RenderRequest req;
    req.mode             = RenderMode::Instance;
    req.instance_anchors = ids;
    write_png(out / "selection_mask.png", render(scene, cam, req).instance);
}

HttpServer *gServer = nullptr;

void
on_signal(int) {
    if (gServer) gServer->stop();
}

} // namespace

int
main(int argc, char **argv) {
    CLI::App app{"Anchor-graph structured Gaussian splatting toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string &) { g.seed_set = true; });
    app.add_option("--config", g.config, "JSON config mirroring Hyper + SyntheticSpec");
    app.add_option("--out", g.out, "Output directory");

    std::string scene_path, dataset_path, embedding_path, selection_path;
    std::size_t view = 0;
    double px = 0.0, py = 0.0, alpha_min = 0.02;
    int iterations = -1, seeds = 5, port = 8080, replacements = kDefaultReplacementAnchors;
    bool standalone = false;
    std::string host = "127.0.0.1";

    auto *generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    auto *train    = app.add_subcommand("train", "Initialize anchors and run stage 1");
    train->add_option("--dataset", dataset_path)->required();
    train->add_option("--iterations", iterations);

    auto *prop = app.add_subcommand("propagate", "Stage 2: graph-regularized refinement");
    prop->add_option("--scene", scene_path)->required();
    prop->add_option("--dataset", dataset_path);
    prop->add_option("--iterations", iterations);
    prop->add_flag("--standalone", standalone, "Dirichlet descent only, no image losses");

    auto *clus = app.add_subcommand("cluster", "Union-find instance clustering");
    clus->add_option("--scene", scene_path)->required();

    auto *attach = app.add_subcommand("attach", "Cluster and attach language features");
    attach->add_option("--scene", scene_path)->required();
    attach->add_option("--dataset", dataset_path)->required();

    auto *qclick = app.add_subcommand("query-click", "Click query");
    qclick->add_option("--scene", scene_path)->required();
    qclick->add_option("--dataset", dataset_path)->required();
    qclick->add_option("--view", view)->required();
    qclick->add_option("--px", px)->required();
    qclick->add_option("--py", py)->required();

    auto *qtext = app.add_subcommand("query-text", "Text query with an embedding vector");
    qtext->add_option("--scene", scene_path)->required();
    qtext->add_option("--embedding", embedding_path, "JSON number list")->required();
    qtext->add_option("--dataset", dataset_path, "Dataset whose first camera renders the mask");

    auto *remove = app.add_subcommand("remove", "Remove a selection and emit artifact masks");
    remove->add_option("--scene", scene_path)->required();
    remove->add_option("--dataset", dataset_path)->required();
    remove->add_option("--selection", selection_path, "JSON with anchor_ids")->required();
    remove->add_option("--replacements", replacements);

    auto *exportsim = app.add_subcommand("export-sim", "Export particles for simulation");
    exportsim->add_option("--scene", scene_path)->required();
    exportsim->add_option("--selection", selection_path);
    exportsim->add_option("--alpha-min", alpha_min);

    auto *eval   = app.add_subcommand("eval", "Full pipeline with metrics");
    auto *ablate = app.add_subcommand("ablate", "Propagation / graph-segmentation ablation");
    ablate->add_option("--seeds", seeds, "Number of seeded scenes");

    auto *serve = app.add_subcommand("serve", "HTTP query service");
    serve->add_option("--scene", scene_path)->required();
    serve->add_option("--dataset", dataset_path)->required();
    serve->add_option("--port", port);
    serve->add_option("--host", host);

    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path out(g.out);
        PipelineConfig cfg = load_config(g);

        if (*generate) {
            const auto spec = resolve_spec(cfg);
            const auto data = generate_scene(spec, cfg.hyper);
            save_dataset(out, spec, data);
            write_json_file(out / "config.json", config_to_json(cfg));
            std::size_t masks = 0;
            for (const auto &m : data.masks) masks += m.size();
            std::cout << "points " << data.points.size() << ", views " << data.cameras.size() << ", masks " << masks
                      << "\n";
        } else if (*train) {
            auto [spec, data] = load_dataset(dataset_path);
            if (iterations >= 0) cfg.stage1.iterations = iterations;
            Scene scene      = initialize_scene(spec, data, cfg.hyper, cfg.seed);
            const auto views = data.training_views();
            const auto r     = optimize_stage1(scene, views, cfg.stage1);
            fs::create_directories(out);
            save_scene(out / "scene_stage1.json", scene);
            std::ofstream csv(out / "loss_stage1.csv");
            write_trajectory_csv(csv, r.trajectory);
            std::cout << "anchors " << scene.anchors.size() << ", added " << r.anchors_added << ", final loss "
                      << r.trajectory.back().losses.total << "\n";
        } else if (*prop) {
            Scene scene = load_scene(scene_path);
            AnchorGraph graph = build_graph(scene, 1.0);
            fs::create_directories(out);
            if (standalone) {
                const auto r = propagate(graph, scene.features(), iterations < 0 ? 1000 : iterations, 0.05);
                scene.set_features(r.features);
                std::cout << "accepted " << r.accepted_steps << " of " << r.iterations << " steps, energy "
                          << r.energies.front() << " -> " << r.energies.back() << "\n";
            } else {
                if (dataset_path.empty()) throw Error(ErrorCode::InvalidInput, "--dataset is required without --standalone");
                auto [spec, data] = load_dataset(dataset_path);
                if (iterations >= 0) cfg.stage2.iterations = iterations;
                const auto views = data.training_views();
                const auto r     = optimize_stage2(scene, graph, views, cfg.stage2);
                std::ofstream csv(out / "loss_stage2.csv");
                write_trajectory_csv(csv, r.trajectory);
                std::cout << "final loss " << r.trajectory.back().losses.total << "\n";
            }
            graph.refresh_weights(scene.features());
            std::ofstream dump(out / "graph.txt");
            write_graph_dump(dump, graph);
            save_scene(out / "scene.json", scene);
        } else if (*clus) {
            const Scene scene = load_scene(scene_path);
            const auto clusters = cluster(build_graph(scene, 1.0), scene, scene.hyper.cluster_weight_threshold);
            fs::create_directories(out);
            std::ofstream(out / "clusters.json") << cluster_report_json(clusters) << '\n';
            std::cout << "clusters " << clusters.size() << "\n";
        } else if (*attach) {
            Scene scene       = load_scene(scene_path);
            auto [spec, data] = load_dataset(dataset_path);
            auto clusters = cluster(build_graph(scene, 1.0), scene, scene.hyper.cluster_weight_threshold);
            const auto views  = data.training_views();
            const auto report = attach_language(scene, clusters, views, data.embeddings);
            fs::create_directories(out);
            std::ofstream(out / "clusters.json") << cluster_report_json(clusters) << '\n';
            save_scene(out / "scene.json", scene);
            std::cout << "clusters " << clusters.size() << ", invisible " << report.invisible_clusters.size() << "\n";
        } else if (*qclick) {
            const Scene scene = load_scene(scene_path);
            auto [spec, data] = load_dataset(dataset_path);
            if (view >= data.cameras.size()) throw Error(ErrorCode::InvalidInput, "unknown view");
            Selection sel;
            bool no_geometry = false;
            try {
                sel = click_query(scene, unproject_click(scene, data.cameras[view], px, py));
            } catch (const Error &e) {
                if (e.code() != ErrorCode::NoGeometryAtPixel) throw;
                no_geometry = true;
            }
            sel.click = ClickOrigin{view, px, py};
            fs::create_directories(out);
            Json j           = selection_to_json(sel);
            j["no_geometry"] = no_geometry;
            write_json_file(out / "selection.json", j);
            write_selection_mask(out, scene, data.cameras[view], sel.grown);
            std::cout << "selected " << sel.grown.size() << " anchors" << (no_geometry ? " (no geometry)" : "") << "\n";
        } else if (*qtext) {
            const Scene scene = load_scene(scene_path);
            const Json e      = read_json_file(embedding_path);
            Eigen::VectorXd emb(Eigen::Index(e.size()));
            for (std::size_t i = 0; i < e.size(); ++i) emb[Eigen::Index(i)] = e[i].get<double>();
            std::vector<InstanceCluster> clusters =
                cluster(build_graph(scene, 1.0), scene, scene.hyper.cluster_weight_threshold);
            adopt_anchor_language(scene, clusters);
            const auto sel = text_query(scene, clusters, emb);
            fs::create_directories(out);
            write_json_file(out / "selection.json", selection_to_json(sel));
            if (!dataset_path.empty()) {
                auto [spec, data] = load_dataset(dataset_path);
                write_selection_mask(out, scene, data.cameras.front(), sel.grown);
            }
            std::cout << "selected " << sel.grown.size() << " anchors\n";
        } else if (*remove) {
            const Scene scene = load_scene(scene_path);
            auto [spec, data] = load_dataset(dataset_path);
            const auto r      = remove_object(scene, read_selection(selection_path), data.cameras, replacements);
            fs::create_directories(out);
            save_scene(out / "scene.json", r.scene);
            for (std::size_t v = 0; v < r.artifact_masks.size(); ++v) {
                char name[64];
                std::snprintf(name, sizeof name, "artifact_v%03zu.png", v);
                write_png(out / name, r.artifact_masks[v]);
            }
            std::cout << "anchors " << r.scene.anchors.size() << ", replacements " << r.replacement_anchors.size()
                      << "\n";
        } else if (*exportsim) {
            const Scene scene = load_scene(scene_path);
            std::vector<AnchorId> sel;
            if (!selection_path.empty()) sel = read_selection(selection_path);
            const auto particles = export_selection(scene, sel, alpha_min);
            fs::create_directories(out);
            std::ofstream f(out / "particles.txt");
            write_particles(f, particles);
            std::cout << "particles " << particles.size() << "\n";
        } else if (*eval) {
            const auto report = run_pipeline(cfg, out);
            std::cout << report_to_json(report).dump(2) << "\n";
        } else if (*ablate) {
            std::vector<AblationRow> rows;
            for (int s = 0; s < seeds; ++s) {
                PipelineConfig c = cfg;
                c.seed           = cfg.seed + std::uint64_t(s);
                rows.push_back(run_ablation(c));
            }
            const Json j = ablation_to_json(rows);
            write_json_file(out / "ablation.json", j);
            std::cout << j.dump(2) << "\n";
        } else if (*serve) {
            auto [spec, data] = load_dataset(dataset_path);
            QueryService service(load_scene(scene_path), data.cameras);
            HttpServer server(service);
            const int bound = server.bind(host, port);
            gServer         = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << host << ":" << bound << std::endl;
            server.listen();
        }
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
