// SPDX-License-Identifier: Apache-2.0
#include <ostream>

#include "vicot/cli.hpp"
#include "vicot/uhr_tiler.hpp"

namespace vicot::cli {
namespace {

void report_error(std::ostream& err, std::string_view command, const Error& e) {
  err << command << ": " << to_string(e.code()) << ": " << e.what() << "\n";
}

json final_json(const StructuredOutput& final) {
  if (final.kind == StructuredKind::end_token) return {{"kind", "end_token"}, {"answer", final.answer}};
  json sections = json::object();
  for (const auto& [key, text] : final.sections) sections[std::string(1, key)] = text;
  return {{"kind", "soap"}, {"sections", sections}};
}

void print_final(const StructuredOutput& final, std::ostream& out) {
  if (final.kind == StructuredKind::end_token) {
    out << final.answer << "\n";
    return;
  }
  for (char key : {'S', 'O', 'A', 'P'}) {
    out << "<" << key << ">\n" << final.section(key) << "\n</" << key << ">\n";
  }
}

int exit_for(Outcome outcome) {
  switch (outcome) {
    case Outcome::completed: return kExitOk;
    case Outcome::round_limit: return kExitRoundLimit;
    case Outcome::error_aborted: return kExitAborted;
  }
  return kExitFailure;
}

/// Loads records, reporting unreadable files as exit 2 and unparsable ones as exit 1.
std::optional<std::vector<json>> load_or_report(const fs::path& path, std::string_view command, std::ostream& err,
                                                int& code) {
  try {
    return load_dataset(path);
  } catch (const Error& e) {
    report_error(err, command, e);
    code = e.code() == ErrorCode::Io ? kExitFailure : kExitViolations;
    return std::nullopt;
  }
}

std::string record_label(const json& record, std::size_t index) {
  if (record.is_object() && record.contains("id") && record.at("id").is_string()) {
    return record.at("id").get<std::string>();
  }
  return "#" + std::to_string(index);
}

}  // namespace

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  RunReport report;
  try {
    if (!fs::exists(args.image)) {
      err << "run: image '" << args.image.string() << "' does not exist\n";
      return kExitFailure;
    }
    AppConfig config = load_config(args.config);
    if (args.backend) config.backend.kind = *args.backend;
    if (args.k) config.run.k = *args.k;
    if (args.max_rounds) config.run.max_rounds = *args.max_rounds;
    const Backends backends = make_backends(config.backend);
    const ToolRouter router = make_router(config);
    report = run(args.image.string(), args.query, router, backends, config.run);
  } catch (const Error& e) {
    report_error(err, "run", e);
    return kExitFailure;
  }

  if (args.json) {
    json j = {{"outcome", to_string(report.outcome)},
              {"rounds", report.rounds},
              {"note", report.note},
              {"prompt_tokens", report.totals.prompt_tokens},
              {"completion_tokens", report.totals.completion_tokens},
              {"tool_calls", report.totals.tool_calls}};
    j["final"] = report.final ? final_json(*report.final) : json(nullptr);
    out << j.dump(2) << "\n";
  } else if (report.final) {
    print_final(*report.final, out);
  }
  if (report.outcome != Outcome::completed) {
    err << "run: stopped after " << report.rounds << " rounds (" << to_string(report.outcome) << ")";
    if (!report.note.empty()) err << ": " << report.note;
    err << "\n";
  }

  if (args.out_trace) {
    if (report.outcome != Outcome::completed) {
      err << "run: trace not written, the run did not complete\n";
    } else {
      try {
        const TrajectoryRecord record = serialize_run(report, args.trace_id);
        write_dataset(*args.out_trace, std::span(&record, 1));
      } catch (const Error& e) {
        report_error(err, "run", e);
        return kExitFailure;
      }
    }
  }
  return exit_for(report.outcome);
}

int cmd_validate(const fs::path& path, bool as_json, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  const auto records = load_or_report(path, "validate", err, code);
  if (!records) return code;
  json results = json::array();
  std::size_t invalid = 0;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const auto report = validate((*records)[i]);
    const std::string label = record_label((*records)[i], i);
    if (!report.ok()) ++invalid;
    if (as_json) {
      json violations = json::array();
      for (const auto& v : report.violations) {
        violations.push_back({{"message_index", v.message_index ? json(*v.message_index) : json(nullptr)},
                              {"code", v.code},
                              {"message", v.message}});
      }
      results.push_back({{"id", label}, {"ok", report.ok()}, {"violations", std::move(violations)}});
    } else if (report.ok()) {
      out << label << ": ok\n";
    } else {
      out << label << ": " << report.violations.size() << " violation(s)\n";
      std::string lines = report.to_string();
      std::size_t start = 0;
      for (auto end = lines.find('\n'); end != std::string::npos; start = end + 1, end = lines.find('\n', start)) {
        out << "  " << lines.substr(start, end - start) << "\n";
      }
    }
  }
  if (as_json) {
    out << json{{"records", records->size()}, {"invalid", invalid}, {"results", results}}.dump(2) << "\n";
  } else {
    out << records->size() << " record(s), " << invalid << " invalid\n";
  }
  return invalid ? kExitViolations : kExitOk;
}

int cmd_replay(const fs::path& path, const std::optional<fs::path>& out_path, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  const auto records = load_or_report(path, "replay", err, code);
  if (!records) return code;
  std::vector<TrajectoryRecord> reproduced;
  std::size_t differing = 0;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const std::string label = record_label((*records)[i], i);
    try {
      const TrajectoryRecord original = TrajectoryRecord::from_json((*records)[i]);
      ReplayBundle bundle = replay(original);
      const RunReport report = run(bundle.image_ref, bundle.query, bundle.router(), bundle.backends, bundle.config);
      TrajectoryRecord again = serialize_run(report, original.id);
      const std::string before = original.to_json().dump();
      const std::string after = again.to_json().dump();
      if (before == after) {
        out << label << ": identical\n";
      } else {
        ++differing;
        std::size_t at = 0;
        while (at < original.messages.size() && at < again.messages.size() &&
               original.messages[at] == again.messages[at]) {
          ++at;
        }
        out << label << ": differs from message " << at << "\n";
      }
      reproduced.push_back(std::move(again));
    } catch (const Error& e) {
      ++differing;
      out << label << ": " << to_string(e.code()) << ": " << e.what() << "\n";
    }
  }
  if (out_path) {
    try {
      write_dataset(*out_path, reproduced);
    } catch (const Error& e) {
      report_error(err, "replay", e);
      return kExitFailure;
    }
  }
  out << records->size() << " record(s), " << differing << " not reproduced\n";
  return differing ? kExitViolations : kExitOk;
}

int cmd_stats(const fs::path& path, std::ostream& out, std::ostream& err) {
  int code = kExitOk;
  const auto records = load_or_report(path, "stats", err, code);
  if (!records) return code;
  std::vector<TrajectoryRecord> decoded;
  for (const auto& r : *records) {
    try {
      decoded.push_back(TrajectoryRecord::from_json(r));
    } catch (const Error& e) {
      report_error(err, "stats", e);
      return kExitViolations;
    }
  }
  out << stats(decoded).to_json().dump(2) << "\n";
  return kExitOk;
}

int cmd_tile(const TileArgs& args, std::ostream& out, std::ostream& err) {
  TileGrid grid;
  std::optional<FilterResult> filtered;
  try {
    grid = tile(read_png_size(args.image), args.tile_size);
    if (args.query) {
      ToolRouter router;
      auto desk = std::make_shared<InProcessServer>("desk");
      register_desk_tools(*desk);
      router.add(desk);
      filtered = filter_tiles(grid, make_tool_detector(router, "desk", "image_detection", args.image.string()),
                              *args.query);
    }
  } catch (const Error& e) {
    report_error(err, "tile", e);
    return kExitFailure;
  }

  auto box_json = [](const PixelBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); };
  if (args.json) {
    json tiles = json::array();
    for (const auto& t : grid.tiles) tiles.push_back({{"tag", region_tag(t.row, t.col)}, {"box", box_json(t.box)}});
    json j = {{"width", grid.image_dims.width}, {"height", grid.image_dims.height}, {"tile_size", grid.tile_size},
              {"rows", grid.rows},          {"cols", grid.cols},                 {"tiles", tiles}};
    if (filtered) {
      json kept = json::array();
      for (const auto& k : filtered->kept) {
        json labels = json::array();
        for (const auto& d : k.detections) labels.push_back(d.label);
        kept.push_back({{"tag", region_tag(k.tile.row, k.tile.col)}, {"detections", labels}});
      }
      json discarded = json::array();
      for (const auto& d : filtered->discarded) discarded.push_back(region_tag(d.tile.row, d.tile.col));
      j["kept"] = kept;
      j["discarded"] = discarded;
    }
    out << j.dump(2) << "\n";
    return kExitOk;
  }

  out << grid.rows << "×" << grid.cols << " grid (" << grid.image_dims.width << "x" << grid.image_dims.height
      << ", tile size " << grid.tile_size << ")\n";
  for (const auto& t : grid.tiles) {
    out << region_tag(t.row, t.col) << " [" << t.box.x1 << ", " << t.box.y1 << ", " << t.box.x2 << ", " << t.box.y2
        << ")\n";
  }
  if (filtered) {
    out << "kept " << filtered->kept.size() << " of " << grid.tiles.size() << " tiles\n";
    for (const auto& k : filtered->kept) {
      out << "  " << region_tag(k.tile.row, k.tile.col) << ": " << k.detections.size() << " detection(s)";
      for (const auto& d : k.detections) out << "; " << d.label;
      out << "\n";
    }
    for (const auto& d : filtered->discarded) {
      out << "  " << region_tag(d.tile.row, d.tile.col) << ": discarded";
      if (d.is_error) out << " (" << d.error_text << ")";
      out << "\n";
    }
  }
  return kExitOk;
}

int cmd_conform(const ConformArgs& args, std::ostream& out, std::ostream& err) {
  json script;
  std::shared_ptr<StdioServer> server;
  try {
    const auto records = load_dataset(args.script);
    script = records.size() == 1 && records.front().is_array() ? records.front() : json(records);
    server = spawn(LaunchSpec{args.server_name, args.command, args.args, {}, {}});
  } catch (const Error& e) {
    report_error(err, "conform", e);
    return kExitFailure;
  }
  int code = kExitOk;
  try {
    server->list_tools();
    for (const auto& step : script) {
      ToolCall call{args.server_name, step.at("tool_name").get<std::string>(), step.value("arguments", json::object()),
                    {}};
      server->call_tool(call);
    }
  } catch (const Error& e) {
    report_error(err, "conform", e);
    code = kExitViolations;
  } catch (const json::exception& e) {
    err << "conform: bad script step: " << e.what() << "\n";
    code = kExitFailure;
  }
  server->close();
  for (const auto& line : server->transcript()) out << line << "\n";
  return code;
}

}  // namespace vicot::cli
