// Copyright Contributors to the agsplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <agsplat/camera.hpp>
#include <agsplat/hyper.hpp>
#include <agsplat/objective.hpp>
#include <agsplat/scene.hpp>
#include <agsplat/synthetic.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>

namespace agsplat {

using Json = nlohmann::json;

Json hyper_to_json(const Hyper &hyper);
/// Missing keys keep their defaults; unknown keys are rejected.
Hyper hyper_from_json(const Json &j, Hyper base = {});

Json camera_to_json(const Camera &camera);
Camera camera_from_json(const Json &j);

Json synthetic_spec_to_json(const SyntheticSpec &spec);
SyntheticSpec synthetic_spec_from_json(const Json &j, SyntheticSpec base = {});

/// {bounds:{min,max}, hyper, seed, anchors:[{x,l,level,f,f_clip?,children:[{o,s_hat,q,alpha,c}]}]}
Json scene_to_json(const Scene &scene);
/// Rebuilds grid occupancy and checks structural invariants.
Scene scene_from_json(const Json &j);

void save_scene(const std::filesystem::path &path, const Scene &scene);
Scene load_scene(const std::filesystem::path &path);

Json read_json_file(const std::filesystem::path &path);
void write_json_file(const std::filesystem::path &path, const Json &j);

/// dataset.json (spec, cameras, points, labels, colors, embeddings) plus one
/// 16-bit PGM per training mask and per GT instance mask.
void save_dataset(const std::filesystem::path &dir, const SyntheticSpec &spec, const SyntheticScene &data);
std::pair<SyntheticSpec, SyntheticScene> load_dataset(const std::filesystem::path &dir);

} // namespace agsplat
