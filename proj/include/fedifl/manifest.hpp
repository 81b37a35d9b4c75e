#pragma once

#include <fstream>
#include <string>

#include "fedifl/data.hpp"
#include "json.hpp"

namespace fedifl {

// Fleet manifests travel as JSON:
//   {"clients":[{"id":1,"devices":[{"id":1,"labels":[0,1,3]}, ...]}, ...]}

inline nlohmann::json layout_to_json(const FleetLayout& fl) {
  nlohmann::json j;
  j["clients"] = nlohmann::json::array();
  for (const auto& c : fl.clients) {
    nlohmann::json jc;
    jc["id"] = c.client_id;
    jc["devices"] = nlohmann::json::array();
    for (const auto& d : c.devices) jc["devices"].push_back({{"id", d.device_id}, {"labels", d.labels}});
    j["clients"].push_back(std::move(jc));
  }
  return j;
}

inline FleetLayout layout_from_json(const nlohmann::json& j) {
  FleetLayout fl;
  if (!j.contains("clients") || !j["clients"].is_array())
    throw CodecError("manifest must contain a \"clients\" array");
  for (const auto& jc : j["clients"]) {
    ClientSpec c;
    c.client_id = jc.at("id").get<int>();
    for (const auto& jd : jc.at("devices")) {
      DeviceSpec d;
      d.device_id = jd.at("id").get<int>();
      d.labels = jd.at("labels").get<std::vector<int>>();
      for (int l : d.labels)
        if (l < 0 || l > 255) throw CodecError("manifest label " + std::to_string(l) + " outside 0..255");
      c.devices.push_back(std::move(d));
    }
    fl.clients.push_back(std::move(c));
  }
  return fl;
}

inline void save_layout(const std::string& path, const FleetLayout& fl) {
  std::ofstream f(path);
  if (!f) throw CodecError("cannot open " + path + " for writing");
  f << layout_to_json(fl).dump(2) << "\n";
}

inline FleetLayout load_layout(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CodecError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CodecError("manifest " + path + " is not valid JSON: " + e.what());
  }
  return layout_from_json(j);
}

}  // namespace fedifl
