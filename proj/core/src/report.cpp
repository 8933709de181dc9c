#include "ctxenc/report.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctxenc/checksum.hpp"
#include "ctxenc/errors.hpp"
#include "ctxenc/version.hpp"

namespace ctxenc {

namespace {

using Json = nlohmann::ordered_json;

Json config_to_json(const ExperimentConfig& cfg) {
  Json j;
  j["dataset"] = cfg.dataset;
  j["data_dir"] = cfg.data_dir.string();
  j["steps"] = cfg.steps;
  j["recurrent"] = cfg.recurrent;
  j["default_context"] = std::string(to_string(cfg.default_context));
  j["variant"] = std::string(to_string(cfg.variant));
  j["embedding_dim"] = cfg.embedding_dim;
  j["position_dim"] = cfg.position_dim;
  j["rank"] = cfg.rank;
  j["learn_embeddings"] = cfg.learn_embeddings;
  j["min_count"] = cfg.min_count;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"epsilon", cfg.optimizer.epsilon}};
  j["master_seed"] = cfg.master_seed;
  j["precision"] = cfg.precision;
  j["jobs"] = cfg.jobs;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig cfg;
  cfg.dataset = j.at("dataset").get<std::string>();
  cfg.data_dir = j.value("data_dir", std::string("data"));
  cfg.steps = j.at("steps").get<std::size_t>();
  cfg.recurrent = j.at("recurrent").get<bool>();
  cfg.default_context = parse_default_context(j.at("default_context").get<std::string>());
  cfg.variant = parse_step_variant(j.at("variant").get<std::string>());
  cfg.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  cfg.position_dim = j.at("position_dim").get<std::size_t>();
  cfg.rank = j.at("rank").get<std::size_t>();
  cfg.learn_embeddings = j.at("learn_embeddings").get<bool>();
  cfg.min_count = j.at("min_count").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<std::size_t>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  const Json& opt = j.at("optimizer");
  cfg.optimizer.learning_rate = opt.at("learning_rate").get<double>();
  cfg.optimizer.beta1 = opt.at("beta1").get<double>();
  cfg.optimizer.beta2 = opt.at("beta2").get<double>();
  cfg.optimizer.epsilon = opt.at("epsilon").get<double>();
  cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
  cfg.precision = j.value("precision", std::string("f64"));
  cfg.jobs = j.value("jobs", std::size_t{1});
  return cfg;
}

Json fold_to_json(const FoldResult& fr, bool include_volatile) {
  Json j;
  j["fold"] = fr.fold;
  j["best_dev_accuracy"] = fr.best_dev_accuracy;
  j["best_epoch"] = fr.best_epoch;
  j["test_accuracy"] = fr.test_accuracy;
  j["parameter_count"] = fr.parameter_count;
  j["vocabulary_size"] = fr.vocabulary_size;
  if (include_volatile) j["wall_time_seconds"] = fr.wall_time_seconds;
  j["epoch_dev_accuracy"] = fr.epoch_dev_accuracy;
  j["epoch_mean_loss"] = fr.epoch_mean_loss;
  return j;
}

FoldResult fold_from_json(const Json& j) {
  FoldResult fr;
  fr.fold = j.at("fold").get<std::size_t>();
  fr.best_dev_accuracy = j.at("best_dev_accuracy").get<double>();
  fr.best_epoch = j.at("best_epoch").get<std::size_t>();
  fr.test_accuracy = j.at("test_accuracy").get<double>();
  fr.parameter_count = j.at("parameter_count").get<std::size_t>();
  fr.vocabulary_size = j.at("vocabulary_size").get<std::size_t>();
  fr.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  fr.epoch_dev_accuracy = j.value("epoch_dev_accuracy", std::vector<double>{});
  fr.epoch_mean_loss = j.value("epoch_mean_loss", std::vector<double>{});
  return fr;
}

}  // namespace

std::string report_to_json(const RunReport& report, bool include_volatile) {
  Json j;
  j["schema"] = "run-report/1";
  j["version"] = kVersion;
  j["build_revision"] = report.build_revision;
  j["config"] = config_to_json(report.config);
  Json folds = Json::array();
  for (const auto& fr : report.folds) folds.push_back(fold_to_json(fr, include_volatile));
  j["folds"] = std::move(folds);
  j["mean_test_accuracy"] = report.mean_test_accuracy;
  j["stddev_test_accuracy"] = report.stddev_test_accuracy;
  if (include_volatile) {
    j["timestamp"] = report.timestamp;
    j["wall_time_seconds"] = report.wall_time_seconds;
  }
  return j.dump(2) + "\n";
}

void write_report_json(const RunReport& report, const std::filesystem::path& path,
                       bool include_volatile) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report: cannot open " + path.string() + " for writing");
  out << report_to_json(report, include_volatile);
  if (!out) throw IoError("report: write failed for " + path.string());
}

RunReport report_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("report: cannot open " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report: invalid JSON in " + path.string() + ": " + e.what());
  }
  try {
    RunReport report;
    report.config = config_from_json(j.at("config"));
    for (const auto& fj : j.at("folds")) report.folds.push_back(fold_from_json(fj));
    report.mean_test_accuracy = j.at("mean_test_accuracy").get<double>();
    report.stddev_test_accuracy = j.at("stddev_test_accuracy").get<double>();
    report.timestamp = j.value("timestamp", std::string{});
    report.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    report.build_revision = j.value("build_revision", std::string{});
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report: missing field in " + path.string() + ": " + e.what());
  }
}

std::string report_csv_header() {
  return "dataset,steps,recurrent,default_context,variant,embedding_dim,position_dim,rank,"
         "learn_embeddings,precision,master_seed,fold,best_epoch,best_dev_accuracy,"
         "test_accuracy,parameter_count,vocabulary_size,wall_time_seconds\n";
}

std::string report_to_csv_rows(const RunReport& report) {
  std::ostringstream out;
  for (const auto& fr : report.folds) {
    out << report.config.dataset << ',' << report.config.steps << ','
        << (report.config.recurrent ? 1 : 0) << ',' << to_string(report.config.default_context)
        << ',' << to_string(report.config.variant) << ',' << report.config.embedding_dim << ','
        << report.config.position_dim << ',' << report.config.rank << ','
        << (report.config.learn_embeddings ? 1 : 0) << ',' << report.config.precision << ','
        << report.config.master_seed << ',' << fr.fold << ',' << fr.best_epoch << ','
        << fr.best_dev_accuracy << ',' << fr.test_accuracy << ',' << fr.parameter_count << ','
        << fr.vocabulary_size << ',' << fr.wall_time_seconds << '\n';
  }
  return out.str();
}

void write_report_csv(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report: cannot open " + path.string() + " for writing");
  out << report_csv_header() << report_to_csv_rows(report);
  if (!out) throw IoError("report: write failed for " + path.string());
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
  Json j = config_to_json(cfg);
  j.erase("jobs");
  j.erase("data_dir");
  return sha256_hex(j.dump());
}

}  // namespace ctxenc
