#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "numroute/topology.hpp"

namespace numroute {

namespace {

using boost::property_tree::ptree;

// Attribute names such as "attr.name" contain dots, so lookups must use a
// path separator that cannot collide.
std::string attr(const ptree& element, const std::string& name) {
  return element.get<std::string>(
      ptree::path_type("<xmlattr>/" + name, '/'), "");
}

bool is_bandwidth_attr(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return name == "bandwidth" || name == "capacity" || name == "linkspeedraw";
}

std::optional<double> parse_number(const std::string& text) {
  try {
    size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == 0) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void warn(std::vector<std::string>* warnings, std::string message) {
  if (warnings != nullptr) warnings->push_back(std::move(message));
}

}  // namespace

Topology Topology::from_graphml(const std::filesystem::path& path,
                                std::vector<std::string>* warnings) {
  std::ifstream stream(path);
  if (!stream) {
    throw GraphmlError("cannot open GraphML file: " + path.string());
  }
  ptree doc;
  try {
    boost::property_tree::read_xml(stream, doc);
  } catch (const boost::property_tree::xml_parser_error& err) {
    throw GraphmlError("malformed XML in " + path.string() + ": " +
                       err.message());
  }

  const auto graphml = doc.get_child_optional("graphml");
  if (!graphml) {
    throw GraphmlError(path.string() + ": missing <graphml> root element");
  }

  // <key> declarations map attribute ids to names.
  std::set<std::string> bandwidth_keys;
  std::set<std::string> latitude_keys;
  std::set<std::string> longitude_keys;
  for (const auto& [tag, child] : *graphml) {
    if (tag != "key") continue;
    const std::string id = attr(child, "id");
    const std::string name = attr(child, "attr.name");
    if (is_bandwidth_attr(name)) bandwidth_keys.insert(id);
    if (name == "Latitude") latitude_keys.insert(id);
    if (name == "Longitude") longitude_keys.insert(id);
  }

  const auto graph = graphml->get_child_optional("graph");
  if (!graph) {
    throw GraphmlError(path.string() + ": missing <graph> element");
  }

  std::map<std::string, int> node_index;
  std::vector<std::optional<double>> latitudes;
  std::vector<std::optional<double>> longitudes;
  struct RawEdge {
    int a;
    int b;
    std::optional<double> bandwidth;
  };
  std::vector<RawEdge> raw_edges;
  std::set<std::pair<int, int>> seen_pairs;

  for (const auto& [tag, child] : *graph) {
    if (tag == "node") {
      const auto id = child.get_optional<std::string>("<xmlattr>.id");
      if (!id) throw GraphmlError(path.string() + ": <node> without id");
      if (node_index.contains(*id)) {
        throw GraphmlError(path.string() + ": duplicate node id '" + *id +
                           "'");
      }
      node_index.emplace(*id, static_cast<int>(node_index.size()));
      std::optional<double> lat;
      std::optional<double> lon;
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const std::string key = attr(data, "key");
        if (latitude_keys.contains(key)) lat = parse_number(data.data());
        if (longitude_keys.contains(key)) lon = parse_number(data.data());
      }
      latitudes.push_back(lat);
      longitudes.push_back(lon);
    } else if (tag == "edge") {
      const auto src = child.get_optional<std::string>("<xmlattr>.source");
      const auto dst = child.get_optional<std::string>("<xmlattr>.target");
      if (!src || !dst) {
        throw GraphmlError(path.string() +
                           ": <edge> without source/target attributes");
      }
      const auto src_it = node_index.find(*src);
      if (src_it == node_index.end()) {
        throw GraphmlError(path.string() + ": edge references undefined node '"
                           + *src + "'");
      }
      const auto dst_it = node_index.find(*dst);
      if (dst_it == node_index.end()) {
        throw GraphmlError(path.string() + ": edge references undefined node '"
                           + *dst + "'");
      }
      const int a = src_it->second;
      const int b = dst_it->second;
      if (a == b) {
        warn(warnings, "ignoring self-loop at node '" + *src + "'");
        continue;
      }
      const auto pair = std::minmax(a, b);
      if (!seen_pairs.emplace(pair.first, pair.second).second) {
        warn(warnings, "ignoring duplicate edge '" + *src + "'-'" + *dst +
                           "'");
        continue;
      }
      std::optional<double> bandwidth;
      for (const auto& [dtag, data] : child) {
        if (dtag != "data") continue;
        const std::string key = attr(data, "key");
        if (bandwidth_keys.contains(key)) {
          bandwidth = parse_number(data.data());
        }
      }
      raw_edges.push_back({pair.first, pair.second, bandwidth});
    }
  }

  const int n = static_cast<int>(node_index.size());
  if (n == 0) throw GraphmlError(path.string() + ": graph has no nodes");

  // Bandwidth attributes, when present, are min-max rescaled into [20, 40];
  // edges without one get the default capacity 20, matching the numeric
  // scale of generated graphs.
  double bw_min = std::numeric_limits<double>::infinity();
  double bw_max = -std::numeric_limits<double>::infinity();
  for (const RawEdge& e : raw_edges) {
    if (e.bandwidth) {
      bw_min = std::min(bw_min, *e.bandwidth);
      bw_max = std::max(bw_max, *e.bandwidth);
    }
  }
  std::vector<Edge> edges;
  for (const RawEdge& e : raw_edges) {
    double c = 20.0;
    if (e.bandwidth) {
      c = bw_max > bw_min
              ? 20.0 + 20.0 * (*e.bandwidth - bw_min) / (bw_max - bw_min)
              : 30.0;
    }
    edges.push_back({e.a, e.b, c});
    edges.push_back({e.b, e.a, c});
  }

  // Geographic coordinates, when complete, are rescaled into the unit disk;
  // otherwise nodes sit on a circle in file order.
  std::vector<std::array<double, 2>> positions(n);
  const bool have_coords =
      n > 0 &&
      std::all_of(latitudes.begin(), latitudes.end(),
                  [](const auto& v) { return v.has_value(); }) &&
      std::all_of(longitudes.begin(), longitudes.end(),
                  [](const auto& v) { return v.has_value(); });
  if (have_coords) {
    double lat_min = *latitudes[0], lat_max = *latitudes[0];
    double lon_min = *longitudes[0], lon_max = *longitudes[0];
    for (int i = 0; i < n; ++i) {
      lat_min = std::min(lat_min, *latitudes[i]);
      lat_max = std::max(lat_max, *latitudes[i]);
      lon_min = std::min(lon_min, *longitudes[i]);
      lon_max = std::max(lon_max, *longitudes[i]);
    }
    for (int i = 0; i < n; ++i) {
      const double x = lon_max > lon_min
          ? 1.8 * (*longitudes[i] - lon_min) / (lon_max - lon_min) - 0.9
          : 0.0;
      const double y = lat_max > lat_min
          ? 1.8 * (*latitudes[i] - lat_min) / (lat_max - lat_min) - 0.9
          : 0.0;
      positions[i] = {x, y};
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double angle = 2.0 * std::numbers::pi * i / std::max(n, 1);
      positions[i] = {0.8 * std::cos(angle), 0.8 * std::sin(angle)};
    }
  }

  Topology topology(n, std::move(positions), std::move(edges));
  if (!topology.connected()) {
    warn(warnings, path.string() + ": graph is disconnected");
  }
  return topology;
}

}  // namespace numroute
