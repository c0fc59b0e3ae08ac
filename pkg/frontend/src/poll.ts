/**
 * Poll-based refresh with overlap suppression: while one tick is still
 * awaiting the API, further ticks are skipped, so a slow backend never
 * piles up duplicate in-flight fetches for the same view.
 */
export class Poller {
    private timer: ReturnType<typeof setInterval> | null = null;
    private busy = false;

    public constructor(
        private readonly tick: () => Promise<void>,
        private readonly intervalMs: number,
    ) {}

    public async runOnce(): Promise<void> {
        if (this.busy) {
            return;
        }
        this.busy = true;
        try {
            await this.tick();
        } finally {
            this.busy = false;
        }
    }

    public start(): void {
        if (this.timer !== null) {
            return;
        }
        void this.runOnce();
        this.timer = setInterval(() => void this.runOnce(), this.intervalMs);
    }

    public stop(): void {
        if (this.timer !== null) {
            clearInterval(this.timer);
            this.timer = null;
        }
    }
}
