#include "dbmnet/common.hpp"

#include <iostream>
#include <mutex>
#include <thread>

namespace dbmnet {

void warn(const std::string& msg) {
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[dbmnet] warning: " << msg << "\n";
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
    const std::size_t nt = std::min<std::size_t>(std::max(threads, 1), n);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    std::exception_ptr err;
    std::mutex err_mu;
    for (std::size_t w = 0; w < nt; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (std::size_t i = w; i < n; i += nt) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

} // namespace dbmnet
