#include "sapgnn/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sapgnn
{
    namespace fs = std::filesystem;
    using nlohmann::json;

    namespace
    {
        std::vector<std::string> split_tabs(const std::string& line)
        {
            std::vector<std::string> out;
            std::size_t start = 0;
            while (true)
            {
                const std::size_t tab = line.find('\t', start);
                out.push_back(line.substr(start, tab - start));
                if (tab == std::string::npos)
                {
                    break;
                }
                start = tab + 1;
            }
            return out;
        }

        std::ifstream open_input(const fs::path& p)
        {
            std::ifstream in(p);
            if (!in)
            {
                throw GraphError("missing file: " + p.string());
            }
            return in;
        }

        NodeId parse_id(const std::string& s, const fs::path& file, std::size_t line_no)
        {
            NodeId v = 0;
            const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || ptr != s.data() + s.size())
            {
                throw GraphError(file.string() + ":" + std::to_string(line_no) + ": bad node id '" + s + "'");
            }
            return v;
        }

        double parse_double(const std::string& s, const fs::path& file, std::size_t line_no)
        {
            // std::from_chars for double is not available on every toolchain we target.
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size())
            {
                throw GraphError(file.string() + ":" + std::to_string(line_no) + ": bad number '" + s + "'");
            }
            return v;
        }

        std::string format_double(double v)
        {
            char buf[32];
            const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
            return std::string(buf, static_cast<std::size_t>(n));
        }

        Graph load_edge_list_dir(const fs::path& dir)
        {
            const json manifest = [&] {
                auto in = open_input(dir / "manifest.json");
                return json::parse(in);
            }();

            Graph g;
            g.num_classes = manifest.at("classes").get<std::size_t>();
            const auto feat_dim = manifest.at("features").get<std::size_t>();

            {
                const fs::path file = dir / "nodes.tsv";
                auto in = open_input(file);
                std::string line;
                std::size_t line_no = 0;
                while (std::getline(in, line))
                {
                    ++line_no;
                    if (line.empty())
                        continue;
                    const auto cols = split_tabs(line);
                    if (cols.size() != 3)
                    {
                        throw GraphError(file.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
                    }
                    g.node_ids.push_back(parse_id(cols[0], file, line_no));
                    g.labels.push_back(cols[1] == "-" ? kUnlabeled
                                                      : static_cast<std::int32_t>(parse_id(cols[1], file, line_no)));
                    g.splits.push_back(split_from_string(cols[2]));
                }
            }

            const auto index = g.row_index();
            if (index.size() != g.node_ids.size())
            {
                throw GraphError("duplicate node id in nodes.tsv");
            }
            {
                const fs::path file = dir / "features.tsv";
                auto in = open_input(file);
                g.features = Matrix(g.node_ids.size(), feat_dim);
                std::vector<bool> seen(g.node_ids.size(), false);
                std::string line;
                std::size_t line_no = 0;
                std::size_t rows = 0;
                while (std::getline(in, line))
                {
                    ++line_no;
                    if (line.empty())
                        continue;
                    const auto cols = split_tabs(line);
                    if (cols.size() != feat_dim + 1)
                    {
                        throw GraphError(file.string() + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(feat_dim) + " feature values, got " +
                                         std::to_string(cols.size() - 1));
                    }
                    const NodeId id = parse_id(cols[0], file, line_no);
                    const auto it = index.find(id);
                    if (it == index.end())
                    {
                        throw GraphError(file.string() + ":" + std::to_string(line_no) + ": feature row for unknown node " +
                                         std::to_string(id));
                    }
                    seen[it->second] = true;
                    ++rows;
                    for (std::size_t k = 0; k < feat_dim; ++k)
                    {
                        g.features(it->second, k) = parse_double(cols[k + 1], file, line_no);
                    }
                }
                if (rows != g.node_ids.size() || std::find(seen.begin(), seen.end(), false) != seen.end())
                {
                    throw GraphError("feature rows (" + std::to_string(rows) + ") do not match node count (" +
                                     std::to_string(g.node_ids.size()) + ")");
                }
            }
            {
                const fs::path file = dir / "edges.tsv";
                auto in = open_input(file);
                std::string line;
                std::size_t line_no = 0;
                while (std::getline(in, line))
                {
                    ++line_no;
                    if (line.empty())
                        continue;
                    const auto cols = split_tabs(line);
                    if (cols.size() != 2)
                    {
                        throw GraphError(file.string() + ":" + std::to_string(line_no) + ": expected 2 columns");
                    }
                    g.edges.push_back({parse_id(cols[0], file, line_no), parse_id(cols[1], file, line_no)});
                }
            }

            g.validate();

            const auto expect = [&](const char* key, std::size_t actual) {
                if (manifest.contains(key) && manifest.at(key).get<std::size_t>() != actual)
                {
                    throw GraphError(std::string("manifest mismatch for '") + key + "': expected " +
                                     std::to_string(manifest.at(key).get<std::size_t>()) + ", found " +
                                     std::to_string(actual));
                }
            };
            expect("nodes", g.num_nodes());
            expect("edges", g.edges.size());
            expect("train", g.count(Split::Train));
            expect("val", g.count(Split::Val));
            expect("test", g.count(Split::Test));
            return g;
        }
    } // namespace

    DatasetFormat dataset_format_from_string(const std::string& s)
    {
        if (s == "edge-list-dir")
            return DatasetFormat::EdgeListDir;
        if (s == "synthetic-spec")
            return DatasetFormat::SyntheticSpec;
        throw std::invalid_argument("unknown dataset format '" + s + "'");
    }

    SyntheticSpec synthetic_spec_from_json_file(const fs::path& path)
    {
        auto in = open_input(path);
        const json j = json::parse(in);
        SyntheticSpec s;
        s.n_nodes = j.value("n_nodes", s.n_nodes);
        s.n_classes = j.value("n_classes", s.n_classes);
        s.feat_dim = j.value("feat_dim", s.feat_dim);
        s.intra_class_edge_prob = j.value("intra_class_edge_prob", s.intra_class_edge_prob);
        s.inter_class_edge_prob = j.value("inter_class_edge_prob", s.inter_class_edge_prob);
        s.seed = j.value("seed", s.seed);
        s.class_sizes = j.value("class_sizes", s.class_sizes);
        s.train_per_class = j.value("train_per_class", s.train_per_class);
        s.val_fraction = j.value("val_fraction", s.val_fraction);
        s.feature_signal = j.value("feature_signal", s.feature_signal);
        s.feature_noise = j.value("feature_noise", s.feature_noise);
        return s;
    }

    Graph load_dataset(const fs::path& path, DatasetFormat format)
    {
        if (!fs::exists(path))
        {
            throw GraphError("missing file: " + path.string());
        }
        switch (format)
        {
        case DatasetFormat::EdgeListDir:
            return load_edge_list_dir(path);
        case DatasetFormat::SyntheticSpec:
            return generate_synthetic(synthetic_spec_from_json_file(path));
        }
        throw std::invalid_argument("load_dataset: unknown format");
    }

    void write_dataset(const fs::path& dir, const Graph& g)
    {
        g.validate();
        fs::create_directories(dir);
        {
            std::ofstream out(dir / "nodes.tsv", std::ios::binary);
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
            {
                out << g.node_ids[i] << '\t' << (g.labels[i] == kUnlabeled ? std::string("-") : std::to_string(g.labels[i]))
                    << '\t' << to_string(g.splits[i]) << '\n';
            }
        }
        {
            std::ofstream out(dir / "features.tsv", std::ios::binary);
            for (std::size_t i = 0; i < g.num_nodes(); ++i)
            {
                out << g.node_ids[i];
                for (const double v : g.features.row(i))
                {
                    out << '\t' << format_double(v);
                }
                out << '\n';
            }
        }
        {
            std::ofstream out(dir / "edges.tsv", std::ios::binary);
            for (const auto& e : g.edges)
            {
                out << e.a << '\t' << e.b << '\n';
            }
        }
        const json manifest = {
            {"nodes", g.num_nodes()},
            {"edges", g.edges.size()},
            {"features", g.feature_dim()},
            {"classes", g.num_classes},
            {"train", g.count(Split::Train)},
            {"val", g.count(Split::Val)},
            {"test", g.count(Split::Test)},
        };
        std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
    }

} // namespace sapgnn
