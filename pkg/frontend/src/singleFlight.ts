/**
 * Latest-wins request guard.
 *
 * Starting a new run aborts the previous request's signal and permanently
 * invalidates its ticket, so a slow earlier response can never overwrite a
 * newer one. Superseded runs resolve to `undefined` instead of throwing.
 */

export class SingleFlight {
    private controller: AbortController | null = null;
    private ticket = 0;

    async run<T>(task: (signal: AbortSignal) => Promise<T>): Promise<T | undefined> {
        this.controller?.abort();
        const controller = new AbortController();
        this.controller = controller;
        this.ticket += 1;
        const ticket = this.ticket;
        try {
            const result = await task(controller.signal);
            return ticket === this.ticket ? result : undefined;
        } catch (error) {
            if (ticket !== this.ticket || controller.signal.aborted) {
                return undefined; // superseded mid-flight; swallow its failure too
            }
            throw error;
        }
    }

    /** True while the most recent run has not settled or been superseded. */
    isCurrent(ticket: number): boolean {
        return ticket === this.ticket;
    }

    cancel(): void {
        this.controller?.abort();
        this.ticket += 1;
    }
}
