#pragma once

#include "radner/completeness.hpp"
#include "radner/economy.hpp"
#include "radner/negishi.hpp"
#include "radner/pricing.hpp"
#include "radner/scenario.hpp"
#include "radner/verifier.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace radner {

struct RunOptions {
    std::string out_dir = "out";
    std::string command = "all";  // validate | solve | price | check | report | all
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> nt;
    std::optional<std::size_t> nx;
    bool keep_going = false;      // continue past a failed stage when its outputs exist
    std::size_t threads = 0;
};

struct StageStatus {
    std::string name;
    bool pass = false;
    std::string message;
    double seconds = 0.0;
};

// Max error of a PDE surface against its Gaussian-benchmark closed form over
// the core nodes of every slice. S uses max(|exact|, 1) as denominator.
struct ClosedFormError {
    std::string surface;
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t nodes = 0;
};

std::vector<ClosedFormError> gaussian_closed_form_errors(const EquilibriumSolution& sol);

// Stages share state in memory; each writes its artifacts into out_dir.
class Pipeline {
public:
    Pipeline(Scenario scenario, RunOptions options);

    static const std::vector<std::string>& stage_names();

    StageStatus validate();
    StageStatus solve();
    StageStatus price();
    StageStatus check();
    StageStatus report();

    // Runs every stage up to the command. Returns 0 iff every executed
    // stage passed.
    int run();

    const Scenario& scenario() const { return scenario_; }
    const std::vector<StageStatus>& stages() const { return stages_; }
    const TimeGrid& pde_times() const { return pde_times_; }
    const SpatialGrid& space() const { return space_; }

    const PrimitivePaths* primitives() const { return prim_.get(); }
    const WeightSolution* weights() const { return weights_ ? &*weights_ : nullptr; }
    const EquilibriumSolution* solution() const { return solution_ ? &*solution_ : nullptr; }
    const DispersionReport* dispersion_report() const { return dispersion_ ? &*dispersion_ : nullptr; }
    const ProbeReport* probe_report() const { return probe_ ? &*probe_ : nullptr; }
    const VerificationSuiteResult* verification() const { return verification_ ? &*verification_ : nullptr; }

private:
    std::string path(const std::string& name) const;
    StageStatus timed(const std::string& name, const std::function<StageStatus()>& body);

    Scenario scenario_;
    RunOptions options_;
    std::shared_ptr<const EconomySpec> econ_;
    TimeGrid pde_times_;
    TimeGrid path_times_;
    SpatialGrid space_;
    std::vector<StageStatus> stages_;
    nlohmann::json validation_;

    std::unique_ptr<PrimitivePaths> prim_;
    std::optional<WeightSolution> weights_;
    std::optional<EquilibriumSolution> solution_;
    std::vector<ClosedFormError> closed_form_;
    std::optional<DispersionReport> dispersion_;
    std::optional<ProbeReport> probe_;
    std::optional<VerificationSuiteResult> verification_;
    std::string probe_note_;
};

} // namespace radner
