#include "sapgnn/protocol.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace sapgnn
{
    using json = nlohmann::json;

    namespace
    {
        void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed)
        {
            if (!j.is_object())
                throw std::invalid_argument("config: '" + where + "' must be an object");
            const std::set<std::string> ok(allowed.begin(), allowed.end());
            for (const auto& [k, v] : j.items())
            {
                if (!ok.contains(k))
                    throw std::invalid_argument("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
            }
        }

        template <class T>
        void read(const json& j, const char* key, T& out)
        {
            if (j.contains(key))
                out = j.at(key).get<T>();
        }

        PartitionKind partition_kind_from_string(const std::string& s)
        {
            if (s == "uniform")
                return PartitionKind::Uniform;
            if (s == "label-skew")
                return PartitionKind::LabelSkew;
            throw std::invalid_argument("unknown partition kind: " + s);
        }

        LabelPolicy label_policy_from_string(const std::string& s)
        {
            if (s == "disjoint")
                return LabelPolicy::Disjoint;
            if (s == "replicate")
                return LabelPolicy::Replicate;
            throw std::invalid_argument("unknown label policy: " + s);
        }

        NodeVisibility visibility_from_string(const std::string& s)
        {
            if (s == "full-node-set")
                return NodeVisibility::FullNodeSet;
            if (s == "edge-incident")
                return NodeVisibility::EdgeIncident;
            throw std::invalid_argument("unknown node visibility: " + s);
        }

        json spec_to_json(const SyntheticSpec& s)
        {
            json j{{"n_nodes", s.n_nodes},
                   {"n_classes", s.n_classes},
                   {"feat_dim", s.feat_dim},
                   {"intra_class_edge_prob", s.intra_class_edge_prob},
                   {"inter_class_edge_prob", s.inter_class_edge_prob},
                   {"seed", s.seed},
                   {"train_per_class", s.train_per_class},
                   {"val_fraction", s.val_fraction},
                   {"feature_signal", s.feature_signal},
                   {"feature_noise", s.feature_noise}};
            if (!s.class_sizes.empty())
                j["class_sizes"] = s.class_sizes;
            return j;
        }

        SyntheticSpec spec_from_json(const json& j)
        {
            check_keys(j, "dataset.synthetic",
                       {"n_nodes", "n_classes", "feat_dim", "intra_class_edge_prob", "inter_class_edge_prob", "seed",
                        "class_sizes", "train_per_class", "val_fraction", "feature_signal", "feature_noise"});
            SyntheticSpec s;
            read(j, "n_nodes", s.n_nodes);
            read(j, "n_classes", s.n_classes);
            read(j, "feat_dim", s.feat_dim);
            read(j, "intra_class_edge_prob", s.intra_class_edge_prob);
            read(j, "inter_class_edge_prob", s.inter_class_edge_prob);
            read(j, "seed", s.seed);
            read(j, "class_sizes", s.class_sizes);
            read(j, "train_per_class", s.train_per_class);
            read(j, "val_fraction", s.val_fraction);
            read(j, "feature_signal", s.feature_signal);
            read(j, "feature_noise", s.feature_noise);
            return s;
        }

        void apply_override(json& root, const std::string& assignment)
        {
            const auto eq = assignment.find('=');
            if (eq == std::string::npos || eq == 0)
                throw std::invalid_argument("override must look like key=value: " + assignment);
            const std::string path = assignment.substr(0, eq);
            const std::string text = assignment.substr(eq + 1);
            json value = json::parse(text, nullptr, false);
            if (value.is_discarded())
                value = text;

            json* node = &root;
            std::stringstream ss(path);
            std::string part;
            std::vector<std::string> parts;
            while (std::getline(ss, part, '.'))
                parts.push_back(part);
            for (std::size_t i = 0; i + 1 < parts.size(); ++i)
            {
                json& next = (*node)[parts[i]];
                if (next.is_null())
                    next = json::object();
                if (!next.is_object())
                    throw std::invalid_argument("override path crosses a non-object at '" + parts[i] + "'");
                node = &next;
            }
            (*node)[parts.back()] = std::move(value);
        }
    } // namespace

    RunConfig parse_run_config(const std::string& json_text, const std::vector<std::string>& overrides)
    {
        json root = json_text.empty() ? json::object() : json::parse(json_text);
        for (const auto& o : overrides)
            apply_override(root, o);
        check_keys(root, "", {"dataset", "partition", "model", "train", "mode", "share_mode"});

        RunConfig c;
        if (root.contains("dataset"))
        {
            const json& d = root.at("dataset");
            if (d.is_string())
            {
                c.dataset.path = d.get<std::string>();
            }
            else
            {
                check_keys(d, "dataset", {"path", "format", "synthetic"});
                if (d.contains("path"))
                    c.dataset.path = d.at("path").get<std::string>();
                if (d.contains("format"))
                    c.dataset.format = dataset_format_from_string(d.at("format").get<std::string>());
                if (d.contains("synthetic"))
                    c.dataset.inline_spec = spec_from_json(d.at("synthetic"));
            }
        }
        if (root.contains("partition"))
        {
            const json& p = root.at("partition");
            check_keys(p, "partition", {"kind", "P", "q", "duplicate_fraction", "seed", "labels", "visibility"});
            if (p.contains("kind"))
                c.partition.kind = partition_kind_from_string(p.at("kind").get<std::string>());
            read(p, "P", c.partition.holders);
            read(p, "q", c.partition.q);
            read(p, "duplicate_fraction", c.partition.duplicate_fraction);
            read(p, "seed", c.partition.seed);
            if (p.contains("labels"))
                c.partition.labels = label_policy_from_string(p.at("labels").get<std::string>());
            if (p.contains("visibility"))
                c.partition.visibility = visibility_from_string(p.at("visibility").get<std::string>());
        }
        if (root.contains("model"))
        {
            const json& m = root.at("model");
            check_keys(m, "model", {"layers", "hidden", "update_kind", "message_kind", "relu", "dropout"});
            read(m, "layers", c.layers);
            read(m, "hidden", c.hidden);
            if (m.contains("update_kind"))
                c.update = update_kind_from_string(m.at("update_kind").get<std::string>());
            if (m.contains("message_kind"))
                c.message = message_kind_from_string(m.at("message_kind").get<std::string>());
            read(m, "relu", c.relu);
            read(m, "dropout", c.dropout);
        }
        if (root.contains("train"))
        {
            const json& t = root.at("train");
            check_keys(t, "train", {"lr", "max_epochs", "patience", "seed"});
            read(t, "lr", c.train.lr);
            read(t, "max_epochs", c.train.max_epochs);
            read(t, "patience", c.train.patience);
            read(t, "seed", c.train.seed);
        }
        if (root.contains("mode"))
            c.mode = pooling_mode_from_string(root.at("mode").get<std::string>());
        if (root.contains("share_mode"))
            c.share_mode = share_mode_from_string(root.at("share_mode").get<std::string>());

        if (c.partition.holders == 0)
            throw std::invalid_argument("config: partition.P must be at least 1");
        if (c.partition.q < 0.0 || c.partition.q > 100.0)
            throw std::invalid_argument("config: partition.q must be a percentage in [0, 100]");
        if (c.layers == 0 || c.hidden == 0)
            throw std::invalid_argument("config: model.layers and model.hidden must be positive");
        if (c.dropout < 0.0 || c.dropout >= 1.0)
            throw std::invalid_argument("config: model.dropout must be in [0, 1)");
        if (!(c.train.lr > 0.0) || c.train.max_epochs == 0)
            throw std::invalid_argument("config: train.lr and train.max_epochs must be positive");
        return c;
    }

    RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& overrides)
    {
        std::ifstream in(file, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot open config " + file.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_run_config(ss.str(), overrides);
    }

    std::string run_config_to_json(const RunConfig& c)
    {
        json d = json::object();
        if (!c.dataset.path.empty())
            d["path"] = c.dataset.path.string();
        if (c.dataset.format)
            d["format"] = *c.dataset.format == DatasetFormat::EdgeListDir ? "edge-list-dir" : "synthetic-spec";
        if (c.dataset.inline_spec)
            d["synthetic"] = spec_to_json(*c.dataset.inline_spec);

        json j{{"dataset", d},
               {"partition",
                {{"kind", c.partition.kind == PartitionKind::Uniform ? "uniform" : "label-skew"},
                 {"P", c.partition.holders},
                 {"q", c.partition.q},
                 {"duplicate_fraction", c.partition.duplicate_fraction},
                 {"seed", c.partition.seed},
                 {"labels", c.partition.labels == LabelPolicy::Disjoint ? "disjoint" : "replicate"},
                 {"visibility",
                  c.partition.visibility == NodeVisibility::FullNodeSet ? "full-node-set" : "edge-incident"}}},
               {"model",
                {{"layers", c.layers},
                 {"hidden", c.hidden},
                 {"update_kind", to_string(c.update)},
                 {"message_kind", to_string(c.message)},
                 {"relu", c.relu},
                 {"dropout", c.dropout}}},
               {"train",
                {{"lr", c.train.lr},
                 {"max_epochs", c.train.max_epochs},
                 {"patience", c.train.patience},
                 {"seed", c.train.seed}}},
               {"mode", to_string(c.mode)},
               {"share_mode", to_string(c.share_mode)}};
        return j.dump(2);
    }

    Graph load_run_dataset(const DatasetRef& d)
    {
        if (d.inline_spec)
            return generate_synthetic(*d.inline_spec);
        if (d.path.empty())
            throw std::invalid_argument("config: no dataset given");
        DatasetFormat f = DatasetFormat::EdgeListDir;
        if (d.format)
            f = *d.format;
        else if (d.path.extension() == ".json")
            f = DatasetFormat::SyntheticSpec;
        return load_dataset(d.path, f);
    }

    std::vector<LocalGraph> partition_graph(const Graph& g, const PartitionConfig& p)
    {
        if (p.kind == PartitionKind::LabelSkew)
            return split_label_skew(g, p.holders, p.q, p.seed);
        UniformSplitOptions o;
        o.holders = p.holders;
        o.labels = p.labels;
        o.seed = p.seed;
        o.duplicate_fraction = p.duplicate_fraction;
        o.visibility = p.visibility;
        return split_edges_uniform(g, o);
    }

    ModelConfig model_config(const RunConfig& c, const Graph& g)
    {
        ModelConfig m;
        m.input_dim = g.feature_dim();
        m.num_classes = g.num_classes;
        m.hidden = c.hidden;
        m.layers = c.layers;
        m.update = c.update;
        m.message = c.message;
        m.relu = c.relu;
        m.dropout = c.dropout;
        m.validate();
        return m;
    }

    ProtocolConfig protocol_config(const RunConfig& c, const Graph& g)
    {
        ProtocolConfig p;
        p.model = model_config(c, g);
        p.mode = c.mode;
        p.share_mode = c.share_mode;
        p.adam.lr = c.train.lr;
        p.shared_seed = c.train.seed;
        p.server_seed = c.train.seed + 1;
        p.salt = salt_from_seed(c.train.seed);
        return p;
    }

} // namespace sapgnn
