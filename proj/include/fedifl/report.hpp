#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fedifl/federation.hpp"
#include "json.hpp"

namespace fedifl {

inline nlohmann::json task_report_json(const TaskReport& rep, bool include_timing = true) {
  nlohmann::json j;
  j["task"] = rep.task;
  j["method"] = rep.method;
  j["seed"] = rep.seed;
  j["target_client"] = rep.target_client;
  j["source_clients"] = rep.source_clients;
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [k, v] : rep.per_client_train_acc) acc[std::to_string(k)] = v;
  j["per_client_train_acc"] = acc;
  j["target_acc"] = rep.target_acc;
  nlohmann::json tally = nlohmann::json::object();
  for (const auto& [label, n] : rep.vote_tallies) tally[std::to_string(label)] = n;
  j["vote_tallies"] = tally;
  nlohmann::json bytes = nlohmann::json::object();
  for (const auto& [chan, n] : rep.phase_bytes) bytes[chan] = n;
  j["phase_bytes"] = bytes;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : rep.per_phase_losses) {
    nlohmann::json row;
    row["client"] = r.client;
    row["phase"] = r.phase;
    row["epoch"] = r.epoch;
    row["loss_total"] = r.loss_total;
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [name, v] : r.components) comps[name] = v;
    row["components"] = comps;
    rows.push_back(row);
  }
  j["per_phase_losses"] = rows;
  if (include_timing) j["wall_time_s"] = rep.wall_time_s;
  return j;
}

// Timing excluded: two same-seed runs must agree byte for byte.
inline std::string canonical_report_text(const TaskReport& rep) {
  return task_report_json(rep, false).dump(2) + "\n";
}

inline std::string report_basename(const TaskReport& rep) {
  return "task" + std::to_string(rep.task) + "_" + rep.method + "_s" + std::to_string(rep.seed);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " into place: " + ec.message());
}

// One row per epoch with every loss component the run can produce; columns a
// phase does not emit stay zero.
inline const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> cols = {"ssim", "ce1",       "adv_i", "adv_g", "ce2", "i_fake_mean",
                                                "fic",  "fip",       "o",     "ce3",   "ce"};
  return cols;
}

inline std::string trace_csv(const std::vector<TraceRow>& rows, int client) {
  std::string out = "epoch,phase,loss_total";
  for (const auto& c : trace_columns()) out += "," + c;
  out += "\n";
  char buf[64];
  const auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    if (r.client != client) continue;
    out += std::to_string(r.epoch) + "," + r.phase + "," + num(r.loss_total);
    for (const auto& c : trace_columns()) {
      double v = 0;
      for (const auto& [name, val] : r.components)
        if (name == c) v = val;
      out += "," + num(v);
    }
    out += "\n";
  }
  return out;
}

// Writes <dir>/taskT_method_sS.json plus one loss CSV per participating
// client; returns the paths written.
inline std::vector<std::filesystem::path> write_task_report(const std::filesystem::path& dir, const TaskReport& rep) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const std::string base = report_basename(rep);
  const std::filesystem::path json_path = dir / (base + ".json");
  write_text_atomic(json_path, task_report_json(rep).dump(2) + "\n");
  written.push_back(json_path);
  for (int k : rep.source_clients) {
    const std::filesystem::path csv_path = dir / (base + "_client" + std::to_string(k) + ".csv");
    write_text_atomic(csv_path, trace_csv(rep.per_phase_losses, k));
    written.push_back(csv_path);
  }
  return written;
}

}  // namespace fedifl
