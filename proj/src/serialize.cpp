#include "onsd/serialize.hpp"

namespace onsd {

void to_json(nlohmann::json& j, const Point2& p) { j = nlohmann::json::array({p.x, p.y}); }

void from_json(const nlohmann::json& j, Point2& p) {
    p.x = j.at(0).get<double>();
    p.y = j.at(1).get<double>();
}

void to_json(nlohmann::json& j, const BBox& b) {
    j = {{"class", to_string(b.cls)}, {"x_min", b.x_min}, {"y_min", b.y_min},
         {"x_max", b.x_max},          {"y_max", b.y_max}, {"confidence", b.confidence}};
}

void from_json(const nlohmann::json& j, BBox& b) {
    b.cls = object_class_from_string(j.at("class").get<std::string>());
    b.x_min = j.at("x_min").get<double>();
    b.y_min = j.at("y_min").get<double>();
    b.x_max = j.at("x_max").get<double>();
    b.y_max = j.at("y_max").get<double>();
    b.confidence = j.value("confidence", 1.0);
}

void to_json(nlohmann::json& j, const GroundTruth& g) {
    j = {{"globe_bbox", g.globe_bbox},
         {"nerve_bbox", g.nerve_bbox ? nlohmann::json(*g.nerve_bbox) : nlohmann::json(nullptr)},
         {"nerve_angle", g.nerve_angle_deg},
         {"sheath_width_mm", g.sheath_width_mm},
         {"label", to_string(g.label)}};
}

void from_json(const nlohmann::json& j, GroundTruth& g) {
    g.globe_bbox = j.at("globe_bbox").get<BBox>();
    if (j.contains("nerve_bbox") && !j.at("nerve_bbox").is_null()) g.nerve_bbox = j.at("nerve_bbox").get<BBox>();
    g.nerve_angle_deg = j.at("nerve_angle").get<double>();
    g.sheath_width_mm = j.at("sheath_width_mm").get<double>();
    g.label = label_from_string(j.at("label").get<std::string>());
}

void to_json(nlohmann::json& j, const FrameDetections& d) {
    j = {{"frame_index", d.frame_index},
         {"globe", d.globe ? nlohmann::json(*d.globe) : nlohmann::json(nullptr)},
         {"nerve", d.nerve ? nlohmann::json(*d.nerve) : nlohmann::json(nullptr)}};
}

void to_json(nlohmann::json& j, const MeasurementConstruction& c) {
    j = {{"globe_center", c.globe_center},
         {"nerve_center", c.nerve_center},
         {"axis_angle", c.axis_angle_deg},
         {"retinal_point", c.retinal_point},
         {"measurement_point", c.measurement_point},
         {"retinal_from_box_edge", c.retinal_from_box_edge}};
}

void to_json(nlohmann::json& j, const WidthMeasurement& w) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : w.per_row_px) rows.push_back(r ? nlohmann::json(*r) : nlohmann::json(nullptr));
    j = {{"width_mm", w.width_mm}, {"valid", w.valid}, {"per_row_px", rows}};
}

}  // namespace onsd
