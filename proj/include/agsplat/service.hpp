// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/cluster.hpp>
#include <agsplat/graph.hpp>
#include <agsplat/io.hpp>
#include <agsplat/scene.hpp>

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace agsplat {

/// Immutable state served to readers; replaced wholesale by mutations.
struct SessionSnapshot {
    Scene scene;
    AnchorGraph query_graph;
    std::vector<InstanceCluster> clusters;
    std::vector<Camera> cameras;
    std::uint64_t revision = 0;
};

/// Failure carrying the HTTP status the service answers with.
class ServiceError : public std::runtime_error {
  public:
    ServiceError(int status, const std::string &message) : std::runtime_error(message), mStatus(status) {}
    int status() const { return mStatus; }

  private:
    int mStatus;
};

std::string base64_encode(const std::string &bytes);

/// Transport-independent request handlers. Every answer carries the revision
/// it was computed against; remove is the only mutator and rejects stale
/// revisions with 409.
class QueryService {
  public:
    QueryService(Scene scene, std::vector<Camera> cameras);

    std::shared_ptr<const SessionSnapshot> snapshot() const;
    std::uint64_t revision() const { return snapshot()->revision; }

    Json info() const;
    /// mode is "color" or "feature".
    std::string render_png(std::size_t view, const std::string &mode) const;
    /// {view, px, py} -> {anchor_ids, seeds, mask, no_geometry, revision}
    Json click(const Json &body) const;
    /// {embedding, view?} -> same shape as click
    Json text(const Json &body) const;
    /// {anchor_ids, revision} -> {revision, artifact_masks, replacement_anchors}
    Json remove(const Json &body);
    /// Particles of the scene with `anchor_ids` tagged as the object.
    std::string export_simulation(double alpha_min, const std::vector<std::uint64_t> &anchor_ids = {}) const;

  private:
    Json selection_json(const SessionSnapshot &snap, const std::vector<AnchorId> &seeds,
                        const std::vector<AnchorId> &grown, std::size_t view, bool no_geometry) const;

    mutable std::mutex mSnapshotMutex;
    std::mutex mWriteMutex;
    std::shared_ptr<const SessionSnapshot> mSnapshot;
};

/// Builds the derived state (query graph, clusters from stored language
/// features) for a scene.
std::shared_ptr<SessionSnapshot> make_snapshot(Scene scene, std::vector<Camera> cameras, std::uint64_t revision);

class HttpServer {
  public:
    explicit HttpServer(QueryService &service);
    ~HttpServer();
    HttpServer(const HttpServer &)            = delete;
    HttpServer &operator=(const HttpServer &) = delete;

    /// Binds (port 0 picks a free port) and returns the bound port.
    int bind(const std::string &host, int port);
    /// Serves until stop() is called.
    void listen();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> mImpl;
};

} // namespace agsplat
