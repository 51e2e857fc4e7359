// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#include <agsplat/error.hpp>
#include <agsplat/query.hpp>
#include <agsplat/render.hpp>
#include <agsplat/service.hpp>

#include <httplib.h>

#include <sstream>

namespace agsplat {

namespace {

std::vector<AnchorId>
ids_from(const Json &j, std::size_t limit) {
    if (!j.is_array()) throw ServiceError(422, "anchor_ids must be a list");
    std::vector<AnchorId> out;
    for (const auto &v : j) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::uint64_t>() >= limit)
            throw ServiceError(422, "anchor id out of range");
        out.push_back(AnchorId(v.get<std::uint64_t>()));
    }
    return out;
}

const Json &
field(const Json &body, const char *key) {
    if (!body.is_object() || !body.contains(key)) throw ServiceError(422, std::string("missing field: ") + key);
    return body.at(key);
}

double
number(const Json &body, const char *key) {
    const Json &v = field(body, key);
    if (!v.is_number()) throw ServiceError(422, std::string("field must be a number: ") + key);
    return v.get<double>();
}

std::size_t
view_index(const SessionSnapshot &snap, const Json &v) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::uint64_t>() >= snap.cameras.size())
        throw ServiceError(404, "unknown view");
    return std::size_t(v.get<std::uint64_t>());
}

} // namespace

std::string
base64_encode(const std::string &bytes) {
    return httplib::detail::base64_encode(bytes);
}

std::shared_ptr<SessionSnapshot>
make_snapshot(Scene scene, std::vector<Camera> cameras, std::uint64_t revision) {
    if (cameras.empty()) throw Error(ErrorCode::InvalidInput, "the service needs at least one view");
    for (const auto &c : cameras) c.validate();
    auto snap         = std::make_shared<SessionSnapshot>();
    snap->query_graph = build_graph(scene, kQueryGraphScale);
    const AnchorGraph graph = build_graph(scene, 1.0);
    snap->clusters          = cluster(graph, scene, scene.hyper.cluster_weight_threshold);
    adopt_anchor_language(scene, snap->clusters);
    snap->scene    = std::move(scene);
    snap->cameras  = std::move(cameras);
    snap->revision = revision;
    return snap;
}

QueryService::QueryService(Scene scene, std::vector<Camera> cameras)
    : mSnapshot(make_snapshot(std::move(scene), std::move(cameras), 0)) {}

std::shared_ptr<const SessionSnapshot>
QueryService::snapshot() const {
    std::lock_guard lock(mSnapshotMutex);
    return mSnapshot;
}

Json
QueryService::info() const {
    const auto snap = snapshot();
    Json clusters   = Json::array();
    for (std::size_t c = 0; c < snap->clusters.size(); ++c) {
        clusters.push_back(Json{{"id", c},
                                {"size", snap->clusters[c].anchors.size()},
                                {"language", snap->clusters[c].language_feature.has_value()}});
    }
    Json views = Json::array();
    for (std::size_t v = 0; v < snap->cameras.size(); ++v) {
        views.push_back(Json{{"index", v}, {"width", snap->cameras[v].width}, {"height", snap->cameras[v].height}});
    }
    return Json{{"anchors", snap->scene.anchors.size()},
                {"clusters", clusters},
                {"views", views},
                {"revision", snap->revision}};
}

std::string
QueryService::render_png(std::size_t view, const std::string &mode) const {
    const auto snap = snapshot();
    if (view >= snap->cameras.size()) throw ServiceError(404, "unknown view");
    if (mode == "color") return encode_png(render(snap->scene, snap->cameras[view], RenderMode::Color).color);
    if (mode == "feature") {
        auto out = render(snap->scene, snap->cameras[view], RenderMode::Feature).feature;
        for (auto &v : out.data()) v = std::clamp(v, 0.0, 1.0);
        return encode_png(out);
    }
    throw ServiceError(422, "mode must be color or feature");
}

Json
QueryService::selection_json(const SessionSnapshot &snap,
                             const std::vector<AnchorId> &seeds,
                             const std::vector<AnchorId> &grown,
                             std::size_t view,
                             bool no_geometry) const {
    RenderRequest req;
    req.mode             = RenderMode::Instance;
    req.instance_anchors = grown;
    const Mask mask      = render(snap.scene, snap.cameras[view], req).instance;
    return Json{{"anchor_ids", grown},
                {"seeds", seeds},
                {"view", view},
                {"mask", base64_encode(encode_png(mask))},
                {"no_geometry", no_geometry},
                {"revision", snap.revision}};
}

Json
QueryService::click(const Json &body) const {
    const auto snap        = snapshot();
    const std::size_t view = view_index(*snap, field(body, "view"));
    const double px = number(body, "px"), py = number(body, "py");
    try {
        const Vec3 p  = unproject_click(snap->scene, snap->cameras[view], px, py);
        const auto sel = click_query(snap->scene, snap->query_graph, p);
        return selection_json(*snap, sel.seeds, sel.grown, view, false);
    } catch (const Error &e) {
        if (e.code() == ErrorCode::NoGeometryAtPixel) return selection_json(*snap, {}, {}, view, true);
        if (e.code() == ErrorCode::InvalidInput) throw ServiceError(422, e.what());
        throw;
    }
}

Json
QueryService::text(const Json &body) const {
    const auto snap = snapshot();
    const Json &e   = field(body, "embedding");
    if (!e.is_array() || e.empty()) throw ServiceError(422, "embedding must be a non-empty number list");
    Eigen::VectorXd emb(Eigen::Index(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (!e[i].is_number()) throw ServiceError(422, "embedding must be a number list");
        emb[Eigen::Index(i)] = e[i].get<double>();
    }
    const std::size_t view = body.contains("view") ? view_index(*snap, body.at("view")) : 0;
    try {
        const auto sel = text_query(snap->scene, snap->query_graph, snap->clusters, emb);
        return selection_json(*snap, sel.seeds, sel.grown, view, false);
    } catch (const Error &err) {
        if (err.code() == ErrorCode::LanguageFeaturesMissing) throw ServiceError(409, err.what());
        if (err.code() == ErrorCode::InvalidInput) throw ServiceError(422, err.what());
        throw;
    }
}

Json
QueryService::remove(const Json &body) {
    std::lock_guard write(mWriteMutex);
    const auto snap = snapshot();
    const Json &rev = field(body, "revision");
    if (!rev.is_number_integer()) throw ServiceError(422, "revision must be an integer");
    if (rev.get<std::uint64_t>() != snap->revision) throw ServiceError(409, "stale revision");
    const auto ids = ids_from(field(body, "anchor_ids"), snap->scene.anchors.size());
    if (ids.empty()) throw ServiceError(422, "anchor_ids is empty");

    RemovalResult removal;
    try {
        removal = remove_object(snap->scene, ids, snap->cameras);
    } catch (const Error &e) {
        if (e.code() == ErrorCode::WholeSceneRemoval) throw ServiceError(422, e.what());
        throw;
    }
    Json masks = Json::array();
    for (const auto &m : removal.artifact_masks) masks.push_back(base64_encode(encode_png(m)));
    auto next = make_snapshot(std::move(removal.scene), snap->cameras, snap->revision + 1);
    const auto revision = next->revision;
    {
        std::lock_guard lock(mSnapshotMutex);
        mSnapshot = std::move(next);
    }
    return Json{{"revision", revision},
                {"artifact_masks", masks},
                {"replacement_anchors", removal.replacement_anchors}};
}

std::string
QueryService::export_simulation(double alpha_min, const std::vector<std::uint64_t> &anchor_ids) const {
    const auto snap = snapshot();
    std::vector<AnchorId> selection;
    for (auto id : anchor_ids) {
        if (id >= snap->scene.anchors.size()) throw ServiceError(422, "anchor id out of range");
        selection.push_back(AnchorId(id));
    }
    std::ostringstream out;
    out << "# revision " << snap->revision << '\n';
    write_particles(out, export_selection(snap->scene, selection, alpha_min));
    return out.str();
}

struct HttpServer::Impl {
    explicit Impl(QueryService &svc) : service(svc) {}
    QueryService &service;
    httplib::Server server;
};

namespace {

template <typename Fn>
void
guarded(httplib::Response &res, Fn &&fn) {
    try {
        fn();
    } catch (const ServiceError &e) {
        res.status = e.status();
        res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    } catch (const nlohmann::json::exception &e) {
        res.status = 422;
        res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    } catch (const Error &e) {
        res.status = e.code() == ErrorCode::InvalidInput ? 422 : 500;
        res.set_content(Json{{"error", e.what()}, {"code", std::string(to_string(e.code()))}}.dump(), "application/json");
    } catch (const std::exception &e) {
        res.status = 500;
        res.set_content(Json{{"error", e.what()}}.dump(), "application/json");
    }
}

Json
parse_body(const httplib::Request &req) {
    try {
        return Json::parse(req.body);
    } catch (const nlohmann::json::exception &) {
        throw ServiceError(422, "body is not valid JSON");
    }
}

void
send_json(httplib::Response &res, const Json &j) {
    res.set_content(j.dump(), "application/json");
}

} // namespace

HttpServer::HttpServer(QueryService &service) : mImpl(std::make_unique<Impl>(service)) {
    auto &srv = mImpl->server;
    auto &svc = mImpl->service;
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    srv.Options(R"(.*)", [](const httplib::Request &, httplib::Response &res) { res.status = 204; });
    srv.Get("/scene/info", [&svc](const httplib::Request &, httplib::Response &res) {
        guarded(res, [&] { send_json(res, svc.info()); });
    });
    srv.Get("/render", [&svc](const httplib::Request &req, httplib::Response &res) {
        guarded(res, [&] {
            if (!req.has_param("view")) throw ServiceError(422, "missing view");
            std::size_t view = 0;
            try {
                view = std::stoul(req.get_param_value("view"));
            } catch (const std::exception &) {
                throw ServiceError(404, "unknown view");
            }
            const auto mode = req.has_param("mode") ? req.get_param_value("mode") : std::string("color");
            res.set_content(svc.render_png(view, mode), "image/png");
        });
    });
    srv.Post("/query/click", [&svc](const httplib::Request &req, httplib::Response &res) {
        guarded(res, [&] { send_json(res, svc.click(parse_body(req))); });
    });
    srv.Post("/query/text", [&svc](const httplib::Request &req, httplib::Response &res) {
        guarded(res, [&] { send_json(res, svc.text(parse_body(req))); });
    });
    srv.Post("/edit/remove", [&svc](const httplib::Request &req, httplib::Response &res) {
        guarded(res, [&] { send_json(res, svc.remove(parse_body(req))); });
    });
    srv.Get("/export/simulation", [&svc](const httplib::Request &req, httplib::Response &res) {
        guarded(res, [&] {
            double alpha_min = 0.02;
            if (req.has_param("alpha_min")) {
                try {
                    alpha_min = std::stod(req.get_param_value("alpha_min"));
                } catch (const std::exception &) {
                    throw ServiceError(422, "alpha_min must be a number");
                }
            }
            std::vector<std::uint64_t> ids;
            if (req.has_param("anchor_ids")) {
                std::stringstream list(req.get_param_value("anchor_ids"));
                std::string item;
                while (std::getline(list, item, ',')) {
                    if (item.empty()) continue;
                    try {
                        ids.push_back(std::stoull(item));
                    } catch (const std::exception &) {
                        throw ServiceError(422, "anchor_ids must be a comma-separated id list");
                    }
                }
            }
            res.set_content(svc.export_simulation(alpha_min, ids), "text/plain");
        });
    });
}

HttpServer::~HttpServer() {
    stop();
}

int
HttpServer::bind(const std::string &host, int port) {
    if (port == 0) return mImpl->server.bind_to_any_port(host);
    if (!mImpl->server.bind_to_port(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void
HttpServer::listen() {
    mImpl->server.listen_after_bind();
}

void
HttpServer::stop() {
    if (mImpl) mImpl->server.stop();
}

} // namespace agsplat
