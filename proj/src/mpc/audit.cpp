#include "sapgnn/mpc.hpp"

#include <nlohmann/json.hpp>

namespace sapgnn
{
    AuditLog::AuditLog(const AuditLog& other)
    {
        std::lock_guard lock(other.mu_);
        records_ = other.records_;
    }

    AuditLog& AuditLog::operator=(const AuditLog& other)
    {
        if (this != &other)
        {
            std::scoped_lock lock(mu_, other.mu_);
            records_ = other.records_;
        }
        return *this;
    }

    void AuditLog::append(AuditRecord r)
    {
        std::lock_guard lock(mu_);
        r.seq = records_.size();
        records_.push_back(std::move(r));
    }

    std::vector<AuditRecord> AuditLog::records() const
    {
        std::lock_guard lock(mu_);
        return records_;
    }

    std::size_t AuditLog::size() const
    {
        std::lock_guard lock(mu_);
        return records_.size();
    }

    void AuditLog::write_jsonl(std::ostream& out) const
    {
        for (const auto& r : records())
        {
            nlohmann::json j{{"timestamp", r.seq}, {"party", r.from},       {"to", r.to},
                             {"kind", r.kind},     {"schema_id", r.schema}, {"epoch", r.epoch},
                             {"layer", r.layer},   {"bytes", r.bytes},      {"plaintext", r.plaintext}};
            out << j.dump() << '\n';
        }
    }

    std::string holder_party(std::size_t p)
    {
        return "holder-" + std::to_string(p);
    }

} // namespace sapgnn
