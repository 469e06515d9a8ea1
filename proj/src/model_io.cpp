#include "invarep/model_io.hpp"

#include <fstream>

#include <json.hpp>

namespace invarep {
namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  out["data"] = std::move(rows);
  return out;
}

Mat mat_from_json(const json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  const json& data = j.at("data");
  if (!data.is_array() || data.size() != rows) throw SchemaError("matrix row count mismatch");
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const json& row = data[i];
    if (!row.is_array() || row.size() != cols) throw SchemaError("matrix column count mismatch");
    for (std::size_t jj = 0; jj < cols; ++jj) m(i, jj) = row[jj].get<double>();
  }
  return m;
}

json net_to_json(const NormNet& net) {
  json layers = json::array();
  for (const Layer& l : net.layers) {
    json layer;
    layer["weight"] = mat_to_json(l.weight);
    layer["bias"] = l.bias;
    layers.push_back(std::move(layer));
  }
  json out;
  out["norm_budget"] = net.norm_budget;
  if (net.output_clamp) {
    out["output_clamp"] = *net.output_clamp;
  } else {
    out["output_clamp"] = nullptr;
  }
  out["layers"] = std::move(layers);
  return out;
}

NormNet net_from_json(const json& j) {
  NormNet net;
  net.norm_budget = j.at("norm_budget").get<double>();
  const json& clamp = j.at("output_clamp");
  if (!clamp.is_null()) net.output_clamp = clamp.get<double>();
  for (const json& layer : j.at("layers")) {
    Layer l;
    l.weight = mat_from_json(layer.at("weight"));
    l.bias = layer.at("bias").get<Vec>();
    if (l.bias.size() != l.weight.rows()) throw SchemaError("layer bias length mismatch");
    net.layers.push_back(std::move(l));
  }
  if (net.layers.empty()) throw SchemaError("network needs at least one layer");
  return net;
}

void write_document(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save model: cannot open " + path);
  out << doc.dump(2) << "\n";
  out.flush();
  if (!out) throw IoError("save model: write failed for " + path);
}

json read_document(const std::string& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load model: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError("load model: " + path + " is not a valid document: " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "invarep-model") {
      throw SchemaError("load model: " + path + " has unknown format tag");
    }
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw SchemaError("load model: " + path + " has version " + std::to_string(version) +
                        ", supported version is " + std::to_string(kModelFormatVersion));
    }
    if (doc.at("kind").get<std::string>() != kind) {
      throw SchemaError("load model: " + path + " holds a '" +
                        doc.at("kind").get<std::string>() + "' model, expected '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw SchemaError("load model: " + path + " misses a header field: " + e.what());
  }
  return doc;
}

}  // namespace

void save_upstream_model(const UpstreamModel& model, const std::string& path) {
  json doc;
  doc["format"] = "invarep-model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = "upstream";
  doc["rep"] = net_to_json(model.rep);
  doc["heads"] = mat_to_json(model.heads);
  doc["head_radius"] = model.head_radius;
  write_document(doc, path);
}

UpstreamModel load_upstream_model(const std::string& path) {
  const json doc = read_document(path, "upstream");
  try {
    UpstreamModel model;
    model.rep = net_from_json(doc.at("rep"));
    model.heads = mat_from_json(doc.at("heads"));
    model.head_radius = doc.at("head_radius").get<double>();
    return model;
  } catch (const json::exception& e) {
    throw SchemaError("load model: " + path + ": " + e.what());
  }
}

void save_downstream_model(const DownstreamModel& model, const std::string& path) {
  json doc;
  doc["format"] = "invarep-model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = "downstream";
  doc["rep"] = net_to_json(model.rep);
  doc["task_head"] = model.task_head;
  doc["reduction"] = mat_to_json(model.reduction);
  doc["aux"] = net_to_json(model.aux);
  doc["aux_enabled"] = model.aux_enabled;
  doc["head_radius"] = model.head_radius;
  doc["reduction_radius"] = model.reduction_radius;
  doc["task"] = model.task == Task::regression ? "regression" : "classification";
  write_document(doc, path);
}

DownstreamModel load_downstream_model(const std::string& path) {
  const json doc = read_document(path, "downstream");
  try {
    DownstreamModel model;
    model.rep = net_from_json(doc.at("rep"));
    model.task_head = doc.at("task_head").get<Vec>();
    model.reduction = mat_from_json(doc.at("reduction"));
    model.aux = net_from_json(doc.at("aux"));
    model.aux_enabled = doc.at("aux_enabled").get<bool>();
    model.head_radius = doc.at("head_radius").get<double>();
    model.reduction_radius = doc.at("reduction_radius").get<double>();
    const std::string task = doc.at("task").get<std::string>();
    if (task == "regression") {
      model.task = Task::regression;
    } else if (task == "classification") {
      model.task = Task::classification;
    } else {
      throw SchemaError("load model: unknown task '" + task + "'");
    }
    return model;
  } catch (const json::exception& e) {
    throw SchemaError("load model: " + path + ": " + e.what());
  }
}

}  // namespace invarep
