#include "sapgnn/harness.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace sapgnn
{
    using json = nlohmann::json;

    namespace
    {
        std::string fmt(double v)
        {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        std::string fmt_q(double q)
        {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%g", q);
            return buf;
        }

        std::vector<std::string> split_csv(const std::string& line)
        {
            std::vector<std::string> out;
            std::stringstream ss(line);
            std::string f;
            while (std::getline(ss, f, ','))
                out.push_back(f);
            if (!line.empty() && line.back() == ',')
                out.emplace_back();
            return out;
        }

        using Clock = std::chrono::steady_clock;

        std::int64_t elapsed_ms(Clock::time_point t0)
        {
            return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
        }
    } // namespace

    const char* to_string(Method m) noexcept
    {
        switch (m)
        {
        case Method::Centralized:
            return "centralized";
        case Method::Sp:
            return "sp";
        case Method::Sapgnn:
            return "sapgnn";
        }
        return "?";
    }

    Method method_from_string(const std::string& s)
    {
        if (s == "centralized")
            return Method::Centralized;
        if (s == "sp")
            return Method::Sp;
        if (s == "sapgnn")
            return Method::Sapgnn;
        throw std::invalid_argument("unknown method: " + s);
    }

    void ExperimentSpec::validate() const
    {
        if (repeats == 0)
            throw std::invalid_argument("sweep: repeats must be at least 1");
        if (holders.empty() || q.empty() || methods.empty())
            throw std::invalid_argument("sweep: every axis needs at least one value");
        for (const auto p : holders)
            if (p == 0)
                throw std::invalid_argument("sweep: P values must be positive");
        for (const auto v : q)
            if (v < 0.0 || v > 100.0)
                throw std::invalid_argument("sweep: q values must be percentages");
        if (dataset_name.empty() || dataset_name.find(',') != std::string::npos)
            throw std::invalid_argument("sweep: dataset name must be non-empty and free of commas");
    }

    ExperimentSpec parse_experiment_spec(const std::string& json_text, const std::vector<std::string>& overrides)
    {
        json root = json::parse(json_text);
        json sweep = root.contains("sweep") ? root.at("sweep") : json::object();
        root.erase("sweep");

        std::vector<std::string> run_overrides;
        for (const auto& o : overrides)
        {
            if (o.rfind("sweep.", 0) != 0)
            {
                run_overrides.push_back(o);
                continue;
            }
            const auto eq = o.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("override must look like key=value: " + o);
            const std::string key = o.substr(6, eq - 6);
            json v = json::parse(o.substr(eq + 1), nullptr, false);
            sweep[key] = v.is_discarded() ? json(o.substr(eq + 1)) : v;
        }

        ExperimentSpec s;
        s.base = parse_run_config(root.dump(), run_overrides);
        for (const auto& [k, v] : sweep.items())
        {
            if (k == "P")
                s.holders = v.is_array() ? v.get<std::vector<std::size_t>>() : std::vector<std::size_t>{v.get<std::size_t>()};
            else if (k == "q")
                s.q = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
            else if (k == "repeats")
                s.repeats = v.get<std::size_t>();
            else if (k == "seed_base")
                s.seed_base = v.get<std::uint64_t>();
            else if (k == "name")
                s.dataset_name = v.get<std::string>();
            else if (k == "methods")
            {
                s.methods.clear();
                for (const auto& m : v)
                    s.methods.push_back(method_from_string(m.get<std::string>()));
            }
            else
                throw std::invalid_argument("config: unknown key 'sweep." + k + "'");
        }
        if (s.dataset_name.empty())
        {
            const auto& d = s.base.dataset;
            s.dataset_name = d.inline_spec ? "synthetic" : d.path.stem().string();
        }
        s.validate();
        return s;
    }

    ExperimentSpec load_experiment_spec(const std::filesystem::path& file, const std::vector<std::string>& overrides)
    {
        std::ifstream in(file, std::ios::binary);
        if (!in)
            throw std::runtime_error("cannot open sweep spec " + file.string());
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_experiment_spec(ss.str(), overrides);
    }

    std::string SweepRow::key() const
    {
        return method + "," + dataset + "," + std::to_string(holders) + "," + fmt_q(q) + "," + std::to_string(repeat);
    }

    std::uint64_t cell_seed(std::uint64_t seed_base, const std::string& dataset, std::size_t repeat)
    {
        // Low 31 bits keep seeds readable and far from overflow when offset.
        return seed_base + (stable_hash(dataset + "/" + std::to_string(repeat)) & 0x7fff'ffffULL);
    }

    std::string format_sweep_row(const SweepRow& r)
    {
        return r.key().substr(0, r.key().rfind(',')) + "," + std::to_string(r.repeat) + "," + std::to_string(r.seed) +
               "," + fmt(r.accuracy) + "," + fmt(r.macro_f1) + "," + std::to_string(r.epochs) + "," +
               std::to_string(r.wall_ms);
    }

    std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& csv)
    {
        std::vector<SweepRow> rows;
        std::ifstream in(csv, std::ios::binary);
        if (!in)
            return rows;
        std::string line;
        if (!std::getline(in, line))
            return rows;
        if (line != kSweepHeader)
            throw std::runtime_error("sweep csv " + csv.string() + " has an unexpected header");
        std::size_t n = 1;
        while (std::getline(in, line))
        {
            ++n;
            if (line.empty())
                continue;
            const auto f = split_csv(line);
            if (f.size() != 10)
                throw std::runtime_error("sweep csv line " + std::to_string(n) + " has " + std::to_string(f.size()) +
                                         " fields");
            SweepRow r;
            r.method = f[0];
            r.dataset = f[1];
            r.holders = std::stoul(f[2]);
            r.q = std::stod(f[3]);
            r.repeat = std::stoul(f[4]);
            r.seed = std::stoull(f[5]);
            r.accuracy = std::stod(f[6]);
            r.macro_f1 = std::stod(f[7]);
            r.epochs = std::stoul(f[8]);
            r.wall_ms = std::stoll(f[9]);
            rows.push_back(std::move(r));
        }
        return rows;
    }

    SweepResult run_sweep(const ExperimentSpec& spec, const std::filesystem::path& csv,
                          const std::function<void(const SweepRow&)>& on_row)
    {
        spec.validate();
        SweepResult res;
        res.rows = read_sweep_csv(csv);
        std::set<std::string> done;
        for (const auto& r : res.rows)
            done.insert(r.key());

        if (csv.has_parent_path())
            std::filesystem::create_directories(csv.parent_path());
        const bool fresh = res.rows.empty() && (!std::filesystem::exists(csv) || std::filesystem::file_size(csv) == 0);
        std::ofstream out(csv, std::ios::binary | std::ios::app);
        if (!out)
            throw std::runtime_error("cannot write " + csv.string());
        if (fresh)
            out << kSweepHeader << '\n' << std::flush;

        const Graph g = load_run_dataset(spec.base.dataset);
        // Centralized training ignores P and q; train once per repeat.
        std::map<std::size_t, std::pair<CentralizedRun, std::int64_t>> central;

        for (const double q : spec.q)
        {
            for (const std::size_t P : spec.holders)
            {
                for (std::size_t rep = 0; rep < spec.repeats; ++rep)
                {
                    RunConfig c = spec.base;
                    c.partition.holders = P;
                    c.partition.q = q;
                    const std::uint64_t seed = cell_seed(spec.seed_base, spec.dataset_name, rep);
                    c.train.seed = seed;
                    c.partition.seed = seed;

                    for (const Method m : spec.methods)
                    {
                        SweepRow row;
                        row.method = to_string(m);
                        row.dataset = spec.dataset_name;
                        row.holders = P;
                        row.q = q;
                        row.repeat = rep;
                        row.seed = seed;
                        if (done.contains(row.key()))
                        {
                            ++res.resumed;
                            continue;
                        }
                        try
                        {
                            const auto t0 = Clock::now();
                            if (m == Method::Centralized)
                            {
                                auto it = central.find(rep);
                                if (it == central.end())
                                {
                                    auto run = train_centralized(c, g);
                                    it = central.emplace(rep, std::make_pair(std::move(run), elapsed_ms(t0))).first;
                                }
                                const auto& o = it->second.first.outcome;
                                row.accuracy = o.test_at_best.accuracy;
                                row.macro_f1 = o.test_at_best.macro_f1;
                                row.epochs = o.epochs_run;
                                row.wall_ms = it->second.second;
                            }
                            else if (m == Method::Sp)
                            {
                                const auto sp = train_sp(partition_graph(g, c.partition), model_config(c, g), c.train, &g);
                                row.accuracy = sp.mean_test.accuracy;
                                row.macro_f1 = sp.mean_test.macro_f1;
                                row.epochs = sp.mean_epochs;
                                row.wall_ms = elapsed_ms(t0);
                            }
                            else
                            {
                                const auto r = train_protocol(protocol_config(c, g), partition_graph(g, c.partition),
                                                              c.train);
                                if (!r.audit_report.clean())
                                    throw ProtocolError("privacy audit: " + r.audit_report.findings.front().describe());
                                row.accuracy = r.outcome.test_at_best.accuracy;
                                row.macro_f1 = r.outcome.test_at_best.macro_f1;
                                row.epochs = r.outcome.epochs_run;
                                row.wall_ms = elapsed_ms(t0);
                            }
                        }
                        catch (const std::exception& e)
                        {
                            res.failures.push_back({row.key(), e.what()});
                            continue;
                        }
                        out << format_sweep_row(row) << '\n' << std::flush;
                        done.insert(row.key());
                        res.rows.push_back(row);
                        ++res.computed;
                        if (on_row)
                            on_row(row);
                    }
                }
            }
        }
        return res;
    }

    std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows)
    {
        std::vector<SummaryRow> out;
        std::map<std::string, std::size_t> slot;
        std::vector<std::vector<const SweepRow*>> groups;
        for (const auto& r : rows)
        {
            const std::string k = r.method + "," + r.dataset + "," + std::to_string(r.holders) + "," + fmt_q(r.q);
            auto [it, inserted] = slot.emplace(k, groups.size());
            if (inserted)
                groups.emplace_back();
            groups[it->second].push_back(&r);
        }
        for (const auto& grp : groups)
        {
            SummaryRow s;
            s.method = grp.front()->method;
            s.dataset = grp.front()->dataset;
            s.holders = grp.front()->holders;
            s.q = grp.front()->q;
            s.n = grp.size();
            auto mean_std = [&](auto field, double& mean, double& sd) {
                double sum = 0.0;
                for (const auto* r : grp)
                    sum += r->*field;
                mean = sum / static_cast<double>(grp.size());
                double ss = 0.0;
                for (const auto* r : grp)
                    ss += (r->*field - mean) * (r->*field - mean);
                sd = grp.size() > 1 ? std::sqrt(ss / static_cast<double>(grp.size() - 1)) : 0.0;
            };
            mean_std(&SweepRow::accuracy, s.accuracy_mean, s.accuracy_std);
            mean_std(&SweepRow::macro_f1, s.macro_f1_mean, s.macro_f1_std);
            out.push_back(s);
        }
        return out;
    }

    void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows)
    {
        out << "method,dataset,P,q,n,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std\n";
        for (const auto& r : rows)
            out << r.method << ',' << r.dataset << ',' << r.holders << ',' << fmt_q(r.q) << ',' << r.n << ','
                << fmt(r.accuracy_mean) << ',' << fmt(r.accuracy_std) << ',' << fmt(r.macro_f1_mean) << ','
                << fmt(r.macro_f1_std) << '\n';
    }

    std::vector<AuditRecord> read_audit_jsonl(std::istream& in)
    {
        std::vector<AuditRecord> out;
        std::string line;
        while (std::getline(in, line))
        {
            if (line.empty())
                continue;
            const json j = json::parse(line);
            AuditRecord r;
            r.seq = j.at("timestamp").get<std::uint64_t>();
            r.from = j.at("party").get<std::string>();
            r.to = j.at("to").get<std::string>();
            r.kind = j.at("kind").get<std::string>();
            r.schema = j.value("schema_id", std::string());
            r.epoch = j.value("epoch", std::uint64_t{0});
            r.layer = j.value("layer", std::int64_t{-1});
            r.bytes = j.value("bytes", std::size_t{0});
            r.plaintext = j.value("plaintext", false);
            out.push_back(std::move(r));
        }
        return out;
    }

    LinearFit fit_line(std::span<const double> x, std::span<const double> y)
    {
        if (x.size() != y.size() || x.size() < 2)
            throw std::invalid_argument("fit_line: need at least two aligned points");
        const double n = static_cast<double>(x.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            mx += x[i];
            my += y[i];
        }
        mx /= n;
        my /= n;
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            sxx += (x[i] - mx) * (x[i] - mx);
            sxy += (x[i] - mx) * (y[i] - my);
            syy += (y[i] - my) * (y[i] - my);
        }
        if (sxx == 0.0)
            throw std::invalid_argument("fit_line: x has no spread");
        LinearFit f;
        f.slope = sxy / sxx;
        f.intercept = my - f.slope * mx;
        double ssr = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
        {
            const double e = y[i] - (f.slope * x[i] + f.intercept);
            ssr += e * e;
        }
        f.r2 = syy == 0.0 ? 1.0 : 1.0 - ssr / syy;
        return f;
    }

} // namespace sapgnn
