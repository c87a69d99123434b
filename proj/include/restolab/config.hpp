#ifndef RESTOLAB_CONFIG_HPP
#define RESTOLAB_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "restolab/trainer.hpp"

namespace restolab {

// Sectioned key-value config. Unknown keys are rejected by name so every run
// is reproducible from its resolved config alone.
class RunConfig {
public:
    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text);

    // "section.key=value" override, validated against the schema
    void set(const std::string& dotted_key, const std::string& value);

    std::string get(const std::string& section, const std::string& key) const;
    bool has(const std::string& section, const std::string& key) const;

    TrainingConfig training() const;
    std::vector<double> probe_sigmas() const;
    std::string clean_dir() const { return get("data", "clean_dir"); }
    std::string eval_dir() const {
        return has("data", "eval_dir") ? get("data", "eval_dir") : clean_dir();
    }
    std::string output_dir() const { return get("run", "output_dir"); }

    // canonical serialized form (sorted keys); its hash goes into manifests
    std::string resolved() const;
    std::string hash() const;

private:
    std::map<std::string, std::string> values_; // "section.key" -> value
};

std::vector<DegradationSpec> parse_task_specs(const std::string& text);

} // namespace restolab

#endif
