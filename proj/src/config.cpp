#include "deffa/config.hpp"

#include <map>
#include <regex>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "deffa/errors.hpp"

namespace pt = boost::property_tree;

namespace deffa {

namespace {

const std::map<std::string, std::set<std::string>>& known_keys()
{
    static const std::map<std::string, std::set<std::string>> keys{
        {"invariant", {"window_size", "alpha_enh", "epsilon", "normalize"}},
        {"model",
         {"dropblock_size", "dropblock_rate", "attention_reduction", "spatial_kernel", "resincept_decoder",
          "fff", "frf"}},
        {"train",
         {"learning_rate", "weight_decay", "epochs", "batch_size", "seed", "image_size", "checkpoint_every",
          "max_steps", "augment_prob", "val_fraction"}},
        {"loss", {"alpha", "smooth", "prob_clamp"}},
        {"balance", {"kmax", "seed"}},
        {"augment", {"alpha_min", "alpha_max", "rot", "seed", "count"}},
        {"eval", {"threshold", "per_image_auc"}},
    };
    return keys;
}

template <typename T>
void read(const pt::ptree& tree, const std::string& key, T& target)
{
    if (auto v = tree.get_optional<std::string>(key)) {
        try {
            target = tree.get<T>(key);
        } catch (const pt::ptree_error&) {
            throw ValidationError("config key '" + key + "' has invalid value '" + *v + "'");
        }
    }
}

}  // namespace

void PipelineConfig::validate() const
{
    invariant.validate();
    model.validate();
    train.validate();
    loss.validate();
    augment.validate();
    if (k_max < 0) throw ValidationError("balance.kmax must be non-negative");
    if (augment_count < 0) throw ValidationError("augment.count must be non-negative");
    if (!(eval.threshold > 0.0 && eval.threshold < 1.0)) throw ValidationError("eval.threshold must lie in (0,1)");
}

Size2 parse_size(const std::string& text)
{
    static const std::regex pair(R"(\s*(\d+)\s*[xX,]\s*(\d+)\s*)");
    static const std::regex single(R"(\s*(\d+)\s*)");
    std::smatch m;
    if (std::regex_match(text, m, pair)) return {std::stoi(m[1]), std::stoi(m[2])};
    if (std::regex_match(text, m, single)) return {std::stoi(m[1]), std::stoi(m[1])};
    throw ValidationError("cannot parse image size '" + text + "' (expected HxW)");
}

PipelineConfig load_config(const std::filesystem::path& path)
{
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError("cannot parse config " + path.string() + ": " + e.message());
    }
    for (const auto& [section, body] : tree) {
        auto it = known_keys().find(section);
        if (it == known_keys().end()) throw ValidationError("unknown config section [" + section + "]");
        for (const auto& [key, value] : body)
            if (!it->second.count(key)) throw ValidationError("unknown config key " + section + "." + key);
    }

    PipelineConfig cfg;
    read(tree, "invariant.window_size", cfg.invariant.window_size);
    read(tree, "invariant.alpha_enh", cfg.invariant.alpha_enh);
    read(tree, "invariant.epsilon", cfg.invariant.epsilon);
    read(tree, "invariant.normalize", cfg.invariant.normalize_output);

    read(tree, "model.dropblock_size", cfg.model.dropblock_size);
    read(tree, "model.dropblock_rate", cfg.model.dropblock_rate);
    read(tree, "model.attention_reduction", cfg.model.attention_reduction);
    read(tree, "model.spatial_kernel", cfg.model.spatial_kernel);
    read(tree, "model.resincept_decoder", cfg.model.arch.resincept_decoder);
    read(tree, "model.fff", cfg.model.arch.fff);
    read(tree, "model.frf", cfg.model.arch.frf);

    read(tree, "train.learning_rate", cfg.train.learning_rate);
    read(tree, "train.weight_decay", cfg.train.weight_decay);
    read(tree, "train.epochs", cfg.train.epochs);
    read(tree, "train.batch_size", cfg.train.batch_size);
    read(tree, "train.seed", cfg.train.seed);
    if (auto size = tree.get_optional<std::string>("train.image_size")) cfg.train.image_size = parse_size(*size);
    read(tree, "train.checkpoint_every", cfg.train.checkpoint_every);
    read(tree, "train.max_steps", cfg.train.max_steps);
    read(tree, "train.augment_prob", cfg.train.augment_prob);
    read(tree, "train.val_fraction", cfg.train.val_fraction);

    read(tree, "loss.alpha", cfg.loss.alpha);
    read(tree, "loss.smooth", cfg.loss.smooth);
    read(tree, "loss.prob_clamp", cfg.loss.prob_clamp);

    read(tree, "balance.kmax", cfg.k_max);
    read(tree, "balance.seed", cfg.balance_seed);

    read(tree, "augment.alpha_min", cfg.augment.alpha_range.lo);
    read(tree, "augment.alpha_max", cfg.augment.alpha_range.hi);
    if (auto rot = tree.get_optional<double>("augment.rot")) cfg.augment.rotation_degrees = {-*rot, *rot};
    read(tree, "augment.seed", cfg.augment.seed);
    read(tree, "augment.count", cfg.augment_count);

    read(tree, "eval.threshold", cfg.eval.threshold);
    read(tree, "eval.per_image_auc", cfg.eval.per_image_auc);
    return cfg;
}

void to_json(nlohmann::json& j, const PipelineConfig& cfg)
{
    j = nlohmann::json{
        {"invariant",
         {{"window_size", cfg.invariant.window_size},
          {"alpha_enh", cfg.invariant.alpha_enh},
          {"epsilon", cfg.invariant.epsilon},
          {"normalize", cfg.invariant.normalize_output}}},
        {"model", cfg.model},
        {"train", cfg.train},
        {"loss", {{"alpha", cfg.loss.alpha}, {"smooth", cfg.loss.smooth}, {"prob_clamp", cfg.loss.prob_clamp}}},
        {"balance", {{"kmax", cfg.k_max}, {"seed", cfg.balance_seed}}},
        {"augment",
         {{"alpha_min", cfg.augment.alpha_range.lo},
          {"alpha_max", cfg.augment.alpha_range.hi},
          {"rot_min", cfg.augment.rotation_degrees.lo},
          {"rot_max", cfg.augment.rotation_degrees.hi},
          {"seed", cfg.augment.seed},
          {"count", cfg.augment_count}}},
        {"eval", {{"threshold", cfg.eval.threshold}, {"per_image_auc", cfg.eval.per_image_auc}}},
    };
}

}  // namespace deffa
