#pragma once

#include "tw/camera.hpp"
#include "tw/image.hpp"
#include "tw/scene.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tw {

// One semantic region of the conditioning image and the prompt that should
// paint it.
struct PromptRegion {
    uint8_t label = 0;
    std::string prompt;
    Mask mask;
};

// Everything the local stub needs to synthesize a view-consistent image:
// the scene itself plus where the camera stands. This never crosses the
// wire — a real generator only ever sees the conditioning rasters.
struct StubContext {
    SceneGeometry scene;
    Pose pose;
    CameraIntrinsics intrinsics;
    double near = 0.1;
    double far = 5.0;
};

struct GenerationRequest {
    DisparityImage disparity;
    std::vector<PromptRegion> regions;
    double control_strength = 0.8;
    int steps = 6;
    uint64_t seed = 0;
    std::optional<StubContext> stub;  // local-only, excluded from the wire form
};

// Codec for shipping a StubContext between processes that both run the
// stub (e.g. job payloads). Distinct from the wire form on purpose: a
// remote generator never sees this.
nlohmann::json stub_context_to_json(const StubContext& ctx);
StubContext stub_context_from_json(const nlohmann::json& j);

// Wire form. Top-level keys are exactly: disparity, regions,
// control_strength, steps, seed. The disparity payload is row-major f32
// little-endian, masks are packed bit planes, both base64.
nlohmann::json request_to_wire(const GenerationRequest& req);
GenerationRequest request_from_wire(const nlohmann::json& j);

// Canonical digest of the wire form; two requests that would look identical
// to a remote generator digest identically, whatever local context rides
// along.
std::string request_digest(const GenerationRequest& req);

nlohmann::json image_to_wire(const ImageRGB8& image);
ImageRGB8 image_from_wire(const nlohmann::json& j);

class Generator {
  public:
    virtual ~Generator() = default;
    virtual ImageRGB8 generate(const GenerationRequest& req) = 0;
};

// Deterministic stand-in for the diffusion backend. Colors are anchored to
// world geometry — every surface point keeps its color from any viewpoint —
// so warped frames can be checked against direct renders. Requires the
// request to carry a StubContext.
class StubGenerator : public Generator {
  public:
    ImageRGB8 generate(const GenerationRequest& req) override;
};

// The same synthesis as a free function.
ImageRGB8 stub_render(const GenerationRequest& req, const StubContext& ctx);

struct RemoteGeneratorConfig {
    std::string endpoint;  // e.g. http://host:port
    std::string auth_token;
    double timeout_s = 30.0;
};

// Posts the wire request to <endpoint>/generate and expects the RGB image
// back. The reply resolution must match the conditioning resolution.
class RemoteGenerator : public Generator {
  public:
    explicit RemoteGenerator(RemoteGeneratorConfig config);
    ImageRGB8 generate(const GenerationRequest& req) override;

  private:
    RemoteGeneratorConfig config_;
};

}  // namespace tw
