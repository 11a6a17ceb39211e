#include "apexflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "apexflow/error.hpp"

namespace apexflow::pipeline {

RecordFlow extract_flow(const dataset::SampleRecord& record, const flow::TvL1Params& params,
                        const apexspot::RoiSet& rois) {
    const dataset::FrameSequence seq = dataset::load_sequence(record);
    RecordFlow out;
    out.spotted = !record.apex_index.has_value();
    out.apex_index = apexspot::resolve_apex(record, seq, rois);
    const int local = out.apex_index - record.onset_index;
    if (local < 0 || local >= seq.count()) {
        throw ValidationError("apex index " + std::to_string(out.apex_index) + " outside the clip of video " +
                              record.video);
    }
    out.field = flow::estimate_flow(seq.frames.front(), seq.frames[static_cast<std::size_t>(local)], params);
    return out;
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex mu;
    auto run = [&] {
        while (!failed.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first) first = std::current_exception();
                failed.store(true);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace apexflow::pipeline
