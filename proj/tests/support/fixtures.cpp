// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include "support/fixtures.hpp"

#include <agsplat/pipeline.hpp>

#include <httplib.h>

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

namespace agsplat::testing {

Vec3
instance_feature(int instance) {
    return Vec3::Constant(0.1) + 0.8 * Vec3::Unit(instance % 3) + 0.3 * double(instance / 3) * Vec3::Ones();
}

LabeledScene
labeled_scene(std::uint64_t seed, int image_size) {
    const PipelineConfig cfg = benchmark_config(seed);
    LabeledScene out;
    out.spec                = resolve_spec(cfg);
    out.spec.cameras.width  = image_size;
    out.spec.cameras.height = image_size;
    out.data   = generate_scene(out.spec, cfg.hyper);
    out.scene  = initialize_scene(out.spec, out.data, cfg.hyper, seed);
    out.labels = anchor_instance_labels(out.scene, out.data);
    for (std::size_t a = 0; a < out.scene.anchors.size(); ++a) {
        const int inst = out.labels[a];
        const int cls  = out.spec.instances[std::size_t(inst)].class_id;
        out.scene.anchors[a].feature          = instance_feature(inst);
        out.scene.anchors[a].language_feature = out.data.class_embeddings.row(cls).transpose();
    }
    return out;
}

namespace {

struct Probe {
    std::string path;
    std::string body; // empty for GET
};

std::vector<Probe>
probes(const LabeledScene &fixture) {
    std::vector<Probe> out{{"/scene/info", ""}, {"/render?view=0&mode=feature", ""}};
    for (std::size_t v = 0; v < 2; ++v) {
        for (std::size_t i = 0; i < fixture.spec.instances.size(); ++i) {
            const Mask &m = fixture.data.instance_masks[v][i];
            if (count_set(m) == 0) continue;
            const auto [x, y] = interior_pixel(m);
            out.push_back({"/query/click", Json{{"view", v}, {"px", x + 0.5}, {"py", y + 0.5}}.dump()});
        }
        out.push_back({"/query/click", Json{{"view", v}, {"px", 0.5}, {"py", 0.5}}.dump()});
    }
    return out;
}

std::string
answer(QueryService &svc, const Probe &p) {
    if (p.path == "/scene/info") return svc.info().dump();
    if (p.path.rfind("/render", 0) == 0) return svc.render_png(0, "feature");
    return svc.click(Json::parse(p.body)).dump();
}

std::uint64_t
revision_of(const std::string &path, const std::string &body, const std::map<std::uint64_t, std::string> &renders) {
    if (path.rfind("/render", 0) == 0) {
        for (const auto &[rev, png] : renders) {
            if (png == body) return rev;
        }
        return ~std::uint64_t(0);
    }
    return Json::parse(body).at("revision").get<std::uint64_t>();
}

} // namespace

ConcurrencyReport
run_concurrent_service_check(const LabeledScene &fixture, std::size_t total, int threads) {
    const auto cams = fixture.data.cameras;
    const auto reads = probes(fixture);
    // Removal plan: each step removes whatever a click on the next instance selects.
    std::vector<Json> plan;
    for (std::size_t i = 0; i + 1 < fixture.spec.instances.size() && plan.size() < 2; ++i) {
        const Mask &m = fixture.data.instance_masks[0][i];
        if (count_set(m) == 0) continue;
        const auto [x, y] = interior_pixel(m);
        plan.push_back(Json{{"view", 0}, {"px", x + 0.5}, {"py", y + 0.5}});
    }

    // Sequential replay gives the expected answer for every probe at every revision.
    std::map<std::uint64_t, std::vector<std::string>> expected;
    std::map<std::uint64_t, std::string> renders;
    {
        QueryService ref(fixture.scene, cams);
        for (std::size_t step = 0;; ++step) {
            auto &row = expected[ref.revision()];
            for (const auto &p : reads) row.push_back(answer(ref, p));
            renders[ref.revision()] = ref.render_png(0, "feature");
            if (step == plan.size()) break;
            const Json sel = ref.click(plan[step]);
            ref.remove(Json{{"anchor_ids", sel.at("anchor_ids")}, {"revision", ref.revision()}});
        }
    }

    QueryService svc(fixture.scene, cams);
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    std::thread listener([&] { server.listen(); });

    ConcurrencyReport report;
    std::mutex report_mutex;
    std::atomic<std::size_t> next{0};
    const std::size_t mutate_every = std::max<std::size_t>(1, total / (plan.size() + 1));
    std::atomic<std::size_t> mutations_done{0};

    auto worker = [&](int id) {
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(60, 0);
        for (;;) {
            const std::size_t n = next.fetch_add(1);
            if (n >= total) break;
            const bool mutate = id == 0 && mutations_done < plan.size() && n >= mutate_every * (mutations_done + 1);
            ConcurrencyReport local;
            local.requests = 1;
            if (mutate) {
                ++local.mutations;
                const std::size_t step = mutations_done;
                auto sel = cli.Post("/query/click", plan[step].dump(), "application/json");
                bool ok  = sel && sel->status == 200;
                if (ok) {
                    const Json s = Json::parse(sel->body);
                    auto rm = cli.Post("/edit/remove",
                                       Json{{"anchor_ids", s.at("anchor_ids")}, {"revision", s.at("revision")}}.dump(),
                                       "application/json");
                    ok = rm && rm->status == 200;
                    if (ok) {
                        const auto rev  = Json::parse(rm->body).at("revision").get<std::uint64_t>();
                        local.torn += rev != step + 1;
                    }
                }
                local.failures += !ok;
                ++mutations_done;
            } else {
                ++local.reads;
                const Probe &p = reads[n % reads.size()];
                auto res = p.body.empty() ? cli.Get(p.path) : cli.Post(p.path, p.body, "application/json");
                if (!res || res->status != 200) {
                    ++local.failures;
                } else {
                    const auto rev = revision_of(p.path, res->body, renders);
                    const auto it  = expected.find(rev);
                    local.torn += it == expected.end() || it->second[n % reads.size()] != res->body;
                }
            }
            std::lock_guard lock(report_mutex);
            report.requests += local.requests;
            report.reads += local.reads;
            report.mutations += local.mutations;
            report.torn += local.torn;
            report.failures += local.failures;
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    for (auto &t : pool) t.join();
    server.stop();
    listener.join();
    report.final_revision = svc.revision();
    return report;
}

} // namespace agsplat::testing
