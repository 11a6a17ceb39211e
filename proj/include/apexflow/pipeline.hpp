#pragma once

#include <cstddef>
#include <functional>

#include "apexflow/apexspot.hpp"
#include "apexflow/dataset.hpp"
#include "apexflow/tvl1flow.hpp"

namespace apexflow::pipeline {

struct RecordFlow {
    flow::FlowField field;
    int apex_index = 0;   // record-level index that was used
    bool spotted = false; // true when the apex came from spot_apex
};

/// Loads the clip, resolves its apex and estimates onset -> apex flow.
RecordFlow extract_flow(const dataset::SampleRecord& record, const flow::TvL1Params& params,
                        const apexspot::RoiSet& rois);

/// Runs body(i) for i in [0, count) on up to `jobs` threads. Each index runs
/// at most once; after a failure no new index starts and the first exception
/// is rethrown once all workers stop.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace apexflow::pipeline
