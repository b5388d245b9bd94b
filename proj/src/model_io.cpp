#include "sftm/model_io.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include "sftm/error.hpp"
#include "sftm/io_util.hpp"

namespace sftm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string encode_le(const std::vector<double>& values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  return out;
}

std::vector<double> decode_le(const fs::path& file, std::size_t count) {
  const std::string bytes = io::read_file(file);
  if (bytes.size() != count * 8) {
    std::ostringstream msg;
    msg << file.string() << ": " << bytes.size() << " bytes, expected " << count * 8;
    throw FormatError(msg.str());
  }
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

json scnn_to_json(const ScnnConfig& c) {
  json conv = json::array();
  for (const auto& l : c.conv) {
    conv.push_back({{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  }
  return {{"in_channels", c.in_channels}, {"length", c.length},       {"conv", conv},
          {"activation", to_string(c.activation)}, {"pooling", to_string(c.pooling)}, {"dense", c.dense}, {"output_dim", c.output_dim},
          {"seed", c.seed}};
}

ScnnConfig scnn_from_json(const json& j) {
  ScnnConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.length = j.at("length").get<std::size_t>();
  c.conv.clear();
  for (const auto& l : j.at("conv")) {
    c.conv.push_back({l.at("out_channels").get<std::size_t>(), l.at("kernel").get<std::size_t>(),
                      l.at("stride").get<std::size_t>()});
  }
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  c.dense = j.at("dense").get<std::vector<std::size_t>>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", to_string(t.optimizer)},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"epsilon", t.epsilon},
          {"shuffle_seed", t.shuffle_seed},
          {"validation_fraction", t.validation_fraction},
          {"standardize_targets", t.standardize_targets}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.epochs = j.at("epochs").get<std::size_t>();
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.learning_rate = j.at("learning_rate").get<double>();
  t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  t.beta1 = j.at("beta1").get<double>();
  t.beta2 = j.at("beta2").get<double>();
  t.epsilon = j.at("epsilon").get<double>();
  t.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
  t.validation_fraction = j.at("validation_fraction").get<double>();
  t.standardize_targets = j.at("standardize_targets").get<bool>();
  return t;
}

std::string history_csv(const std::vector<EpochLoss>& h) {
  std::string out = "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < h.size(); ++e) {
    out += std::to_string(e + 1) + "," + io::format_double(h[e].train) + "," +
           io::format_double(h[e].val) + "\n";
  }
  return out;
}

}  // namespace

void save_model(const TrainedModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json weights = json::array();
  for (const auto& w : model.net.weights()) {
    const std::string file = w.name + ".bin";
    io::write_file_atomic(dir / file, encode_le(w.values));
    weights.push_back({{"name", w.name}, {"shape", w.shape}, {"file", file}});
  }
  io::write_file_atomic(dir / "output_shift.bin", encode_le(model.net.output_shift()));
  io::write_file_atomic(dir / "output_scale.bin", encode_le(model.net.output_scale()));
  io::write_file_atomic(dir / "history.csv", history_csv(model.history));

  json j = {{"format_version", kModelFormatVersion},
            {"target", to_string(model.target)},
            {"hypothesis", to_string(model.hypothesis)},
            {"scnn", scnn_to_json(model.net.config())},
            {"train", train_to_json(model.train)},
            {"weights", weights}};
  if (model.scaling) {
    const auto& s = *model.scaling;
    j["scaling"] = {{"max_A", s.max_A}, {"min_A", s.min_A}, {"max_F", s.max_F}, {"min_F", s.min_F}};
  }
  io::write_file_atomic(dir / "config.json", j.dump(2) + "\n");
}

TrainedModel load_model(const fs::path& dir) {
  if (!fs::exists(dir / "config.json")) throw IoError("no model at " + dir.string());
  json j;
  try {
    j = json::parse(io::read_file(dir / "config.json"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw VersionError("model format version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kModelFormatVersion) + ")");
    }
    TrainedModel m{Scnn(scnn_from_json(j.at("scnn"))), train_from_json(j.at("train")),
                   {}, std::nullopt, parse_target(j.at("target").get<std::string>()),
                   parse_hypothesis(j.at("hypothesis").get<std::string>())};
    auto& ws = m.net.weights();
    const auto& listed = j.at("weights");
    if (listed.size() != ws.size()) throw FormatError("config.json: weight list does not match architecture");
    for (std::size_t i = 0; i < ws.size(); ++i) {
      if (listed[i].at("name").get<std::string>() != ws[i].name ||
          listed[i].at("shape").get<std::vector<std::size_t>>() != ws[i].shape) {
        throw FormatError("config.json: weight '" + ws[i].name + "' does not match architecture");
      }
      ws[i].values = decode_le(dir / listed[i].at("file").get<std::string>(), ws[i].values.size());
    }
    const std::size_t out = m.net.config().output_dim;
    m.net.output_shift() = decode_le(dir / "output_shift.bin", out);
    m.net.output_scale() = decode_le(dir / "output_scale.bin", out);
    if (j.contains("scaling")) {
      const auto& s = j.at("scaling");
      m.scaling = ScalingStats{s.at("max_A").get<double>(), s.at("min_A").get<double>(),
                               s.at("max_F").get<double>(), s.at("min_F").get<double>()};
    }
    const io::Table h = io::read_table_csv(dir / "history.csv");
    const auto& tr = h.column("train_loss");
    const auto& va = h.column("val_loss");
    for (std::size_t e = 0; e < tr.size(); ++e) m.history.push_back({tr[e], va[e]});
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
}

std::vector<double> predict_series(const TrainedModel& model, std::span<const double> forest,
                                   std::span<const double> agriculture) {
  if (!model.scaling) {
    throw ConfigError("model has no stored scaling stats; refusing to predict on unscaled input");
  }
  const std::size_t len = model.net.config().length;
  if (forest.size() != len || agriculture.size() != len) {
    std::ostringstream msg;
    msg << "series has " << forest.size() << " observations, model expects " << len;
    throw ShapeError(msg.str());
  }
  const auto& s = *model.scaling;
  SeriesBatch b(1, 2, len);
  for (std::size_t t = 0; t < len; ++t) {
    b.at(0, 0, t) = ScalingStats::apply(forest[t], s.max_A, s.min_A);
    b.at(0, 1, t) = ScalingStats::apply(agriculture[t], s.max_F, s.min_F);
  }
  const Matrix out = model.net.forward(b);
  return {out.data().begin(), out.data().end()};
}

}  // namespace sftm
