#include "hvseg/export.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "hvseg/error.hpp"

namespace hvseg {

using nlohmann::json;

std::string to_string(ExportFormat format) {
    switch (format) {
        case ExportFormat::geojson: return "geojson";
        case ExportFormat::json: return "json";
        case ExportFormat::table: return "table";
    }
    return "geojson";
}

ExportFormat export_format_from_string(const std::string& s) {
    if (s == "geojson") return ExportFormat::geojson;
    if (s == "json") return ExportFormat::json;
    if (s == "table" || s == "csv") return ExportFormat::table;
    throw Error(ErrorCode::invalid_argument, "unknown export format '" + s + "'");
}

std::string content_type(ExportFormat format) {
    switch (format) {
        case ExportFormat::geojson: return "application/geo+json";
        case ExportFormat::json: return "application/json";
        case ExportFormat::table: return "text/csv";
    }
    return "application/octet-stream";
}

double round_to(double value, int decimals) {
    const double f = std::pow(10.0, decimals);
    const double r = std::round(value * f) / f;
    return r == 0.0 ? 0.0 : r;  // no negative zero
}

namespace {

json ring_of(const Polygon& p) {
    json ring = json::array();
    for (const auto& v : p.exterior) ring.push_back({round_to(v.x, 2), round_to(v.y, 2)});
    if (!p.exterior.empty()) ring.push_back(ring.front());
    return ring;
}

std::vector<std::string> flags_of(const Instance& inst) {
    std::vector<std::string> flags;
    if (inst.nc) flags = inst.nc->flags.names();
    if (inst.orphan_nucleus) flags.emplace_back("orphan_nucleus");
    std::sort(flags.begin(), flags.end());
    flags.erase(std::unique(flags.begin(), flags.end()), flags.end());
    return flags;
}

json properties_of(const Instance& inst) {
    json p;
    p["id"] = inst.id;
    p["head"] = to_string(inst.head);
    p["centroid_x"] = round_to(inst.morph.centroid.x, 2);
    p["centroid_y"] = round_to(inst.morph.centroid.y, 2);
    p["area_px2"] = round_to(inst.morph.area_px2, 4);
    p["perimeter_px"] = round_to(inst.morph.perimeter_px, 4);
    p["circularity"] = round_to(inst.morph.circularity, 4);
    p["flags"] = flags_of(inst);
    if (is_cell_head(inst.head)) {
        p["nucleus_id"] = inst.nc && inst.nc->nucleus_id ? json(*inst.nc->nucleus_id) : json(nullptr);
        p["nc_ratio"] = inst.nc ? round_to(inst.nc->nc_ratio, 4) : 0.0;
    }
    return p;
}

std::vector<const Instance*> ordered(const InstanceCollection& c) {
    std::vector<const Instance*> out;
    for (const auto& i : c.instances) out.push_back(&i);
    auto head_rank = [&](Head h) {
        auto it = std::find(c.heads.begin(), c.heads.end(), h);
        return it == c.heads.end() ? c.heads.size() + static_cast<std::size_t>(h) : static_cast<std::size_t>(it - c.heads.begin());
    };
    std::stable_sort(out.begin(), out.end(), [&](const Instance* a, const Instance* b) {
        const auto ra = head_rank(a->head), rb = head_rank(b->head);
        return ra != rb ? ra < rb : a->id < b->id;
    });
    return out;
}

std::string number(double v) { return json(v).dump(); }

std::string geojson_of(const InstanceCollection& c) {
    json features = json::array();
    for (const auto* inst : ordered(c)) {
        json f;
        f["type"] = "Feature";
        f["geometry"] = {{"type", "Polygon"}, {"coordinates", json::array({ring_of(inst->polygon)})}};
        f["properties"] = properties_of(*inst);
        features.push_back(std::move(f));
    }
    json doc;
    doc["type"] = "FeatureCollection";
    doc["features"] = std::move(features);
    return doc.dump() + "\n";
}

std::string json_of(const InstanceCollection& c) {
    json doc;
    doc["slide"] = {{"width", c.slide.width_px},
                    {"height", c.slide.height_px},
                    {"mpp", c.slide.mpp ? json(*c.slide.mpp) : json(nullptr)},
                    {"modality", to_string(c.slide.modality)}};
    doc["config_hash"] = c.provenance.config_hash;
    json counts = json::object();
    for (auto h : c.heads) counts[to_string(h)] = c.count(h);
    doc["counts"] = counts;
    json items = json::array();
    for (const auto* inst : ordered(c)) {
        json j = properties_of(*inst);
        j["polygon"] = ring_of(inst->polygon);
        const auto& b = inst->morph.bbox;
        j["bbox"] = {round_to(b.x0, 2), round_to(b.y0, 2), round_to(b.x1, 2), round_to(b.y1, 2)};
        j["tile"] = {inst->tile_row, inst->tile_col};
        if (inst->nc) {
            j["cell_area_px2"] = round_to(inst->nc->cell_area_px2, 4);
            j["nucleus_area_px2"] = round_to(inst->nc->nucleus_area_px2, 4);
            j["cytoplasm_area_px2"] = round_to(inst->nc->cytoplasm_area_px2, 4);
        }
        items.push_back(std::move(j));
    }
    doc["instances"] = std::move(items);
    doc["failures"] = c.provenance.failures.size();
    return doc.dump() + "\n";
}

std::string table_of(const InstanceCollection& c) {
    std::ostringstream out;
    out << kTableHeader << '\n';
    for (const auto* inst : ordered(c)) {
        const auto p = properties_of(*inst);
        out << inst->id << ',' << to_string(inst->head) << ',' << number(p["centroid_x"]) << ','
            << number(p["centroid_y"]) << ',' << number(p["area_px2"]) << ',' << number(p["perimeter_px"]) << ','
            << number(p["circularity"]) << ',';
        if (p.contains("nucleus_id") && !p["nucleus_id"].is_null()) out << p["nucleus_id"].get<std::uint32_t>();
        out << ',';
        if (p.contains("nc_ratio")) out << number(p["nc_ratio"]);
        out << ',';
        const auto flags = flags_of(*inst);
        for (std::size_t i = 0; i < flags.size(); ++i) out << (i ? "|" : "") << flags[i];
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::string export_collection(const InstanceCollection& collection, ExportFormat format) {
    switch (format) {
        case ExportFormat::geojson: return geojson_of(collection);
        case ExportFormat::json: return json_of(collection);
        case ExportFormat::table: return table_of(collection);
    }
    throw Error(ErrorCode::invalid_argument, "unknown export format");
}

InstanceCollection parse_geojson(const std::string& text) {
    InstanceCollection c;
    try {
        const json doc = json::parse(text);
        require(doc.at("type") == "FeatureCollection", "not a GeoJSON FeatureCollection");
        for (const auto& f : doc.at("features")) {
            const auto& g = f.at("geometry");
            require(g.at("type") == "Polygon", "only Polygon geometries are supported");
            const auto& p = f.at("properties");
            Instance inst;
            inst.id = p.at("id").get<std::uint32_t>();
            inst.head = head_from_string(p.at("head").get<std::string>());
            const auto& ring = g.at("coordinates").at(0);
            for (const auto& v : ring) inst.polygon.exterior.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
            if (inst.polygon.exterior.size() > 1 && inst.polygon.exterior.front() == inst.polygon.exterior.back())
                inst.polygon.exterior.pop_back();
            inst.morph.area_px2 = p.value("area_px2", inst.polygon.area());
            inst.morph.perimeter_px = p.value("perimeter_px", inst.polygon.perimeter());
            inst.morph.circularity = p.value("circularity", 0.0);
            inst.morph.centroid = {p.value("centroid_x", 0.0), p.value("centroid_y", 0.0)};
            inst.morph.bbox = inst.polygon.bbox();
            std::vector<std::string> flags;
            if (p.contains("flags")) flags = p.at("flags").get<std::vector<std::string>>();
            auto has = [&](const char* f) { return std::find(flags.begin(), flags.end(), f) != flags.end(); };
            inst.orphan_nucleus = has("orphan_nucleus");
            if (p.contains("nc_ratio")) {
                NCRecord r;
                r.cell_id = inst.id;
                if (p.contains("nucleus_id") && !p.at("nucleus_id").is_null())
                    r.nucleus_id = p.at("nucleus_id").get<std::uint32_t>();
                r.nc_ratio = p.at("nc_ratio").get<double>();
                r.flags.anucleate = has("anucleate");
                r.flags.cytoplasm_depleted = has("cytoplasm_depleted");
                inst.nc = r;
            }
            if (std::find(c.heads.begin(), c.heads.end(), inst.head) == c.heads.end()) c.heads.push_back(inst.head);
            c.instances.push_back(std::move(inst));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("malformed GeoJSON: ") + e.what());
    }
    return c;
}

}  // namespace hvseg
