int cycle_ping_b(int n);

int cycle_ping_a(int n)
{
    if (n <= 0)
        return 0;
    return cycle_ping_b(n - 1);
}
