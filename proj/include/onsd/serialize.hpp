#pragma once

// JSON mappings (nlohmann ADL hooks) for the shared value types.

#include "json.hpp"
#include "onsd/detection.hpp"
#include "onsd/geometry.hpp"
#include "onsd/phantom.hpp"
#include "onsd/segmentation.hpp"

namespace onsd {

void to_json(nlohmann::json& j, const Point2& p);
void from_json(const nlohmann::json& j, Point2& p);

void to_json(nlohmann::json& j, const BBox& b);
void from_json(const nlohmann::json& j, BBox& b);

void to_json(nlohmann::json& j, const GroundTruth& g);
void from_json(const nlohmann::json& j, GroundTruth& g);

void to_json(nlohmann::json& j, const FrameDetections& d);
void to_json(nlohmann::json& j, const MeasurementConstruction& c);
void to_json(nlohmann::json& j, const WidthMeasurement& w);

}  // namespace onsd
